mod common;

use common::{s1, Gen};
use dirinfo_core::{
    feedback_capacity, finite_horizon_dp, ftfi_capacity, nofeedback_capacity_q0, stationary_solve, ChannelModel, Mat,
    Regime,
};

const CS: [f64; 6] = [0.2, 0.5, 0.9, 1.5, 2.0, 3.0];
const KAPPAS: [f64; 6] = [0.5, 1.0, 3.0, 5.0, 9.0, 20.0];

/// Scalar `D = K_V = R = 1`, `Q = 0` capacity worked out by hand.
fn hand_capacity(c: f64, kappa: f64) -> Option<f64> {
    if c.abs() < 1.0 {
        Some(0.5 * (kappa + 1.0).ln())
    } else if kappa >= c * c - 1.0 {
        Some(0.5 * ((kappa + 1.0) / (c * c)).ln())
    } else {
        None
    }
}

fn scalar(c: f64, kappa: f64) -> ChannelModel {
    ChannelModel::scalar(c, 1.0, 1.0, 1.0, 0.0, kappa)
}

#[test]
fn scalar_grid_matches_hand_capacity() {
    for &c in &CS {
        for &kappa in &KAPPAS {
            let fb = feedback_capacity(&scalar(c, kappa)).unwrap();
            match hand_capacity(c, kappa) {
                Some(expected) => {
                    assert!(
                        (fb.capacity_nats - expected).abs() <= 1e-6,
                        "C {c} kappa {kappa}: {} vs {expected}",
                        fb.capacity_nats
                    );
                    assert!(fb.budget_feasible);
                }
                None => {
                    assert!(!fb.budget_feasible);
                    assert_eq!(fb.capacity_nats, 0.0);
                    assert_eq!(fb.solution.regime, Regime::ZeroRate);
                }
            }
        }
    }
}

#[test]
fn budget_binds_wherever_feasible() {
    for &c in &CS {
        for &kappa in &KAPPAS {
            let fb = feedback_capacity(&scalar(c, kappa)).unwrap();
            if fb.budget_feasible {
                assert!(fb.constraint_active);
                assert!(fb.s_star.unwrap() > 0.0);
                assert!((fb.solution.achieved_cost - kappa).abs() <= 1e-6 * (1.0 + kappa));
            }
        }
    }
}

#[test]
fn optimal_gain_ignores_noise_and_budget() {
    let c = Mat::from_row_slice(2, 2, &[1.4, 0.3, 0.0, 0.6]);
    let d = Mat::from_row_slice(2, 1, &[1.0, 0.5]);
    let q = Mat::identity(2, 2) * 0.2;
    let reference = feedback_capacity(&ChannelModel::time_invariant(
        c.clone(),
        d.clone(),
        Mat::identity(2, 2),
        s1(1.0),
        q.clone(),
        12.0,
    ))
    .unwrap();
    for (kv, kappa) in [(0.5, 12.0), (2.0, 30.0), (1.0, 25.0)] {
        let other = feedback_capacity(&ChannelModel::time_invariant(
            c.clone(),
            d.clone(),
            Mat::identity(2, 2) * kv,
            s1(1.0),
            q.clone(),
            kappa,
        ))
        .unwrap();
        assert!(other.budget_feasible);
        assert!((&other.solution.gain - &reference.solution.gain).amax() <= 1e-9);
    }
}

#[test]
fn long_horizon_approaches_stationary_solution() {
    let model = scalar(2.0, 9.0).with_horizon(500).with_terminal_q(s1(1.0));
    let fh = finite_horizon_dp(&model, 0.05).unwrap();
    let st = stationary_solve(&scalar(2.0, 9.0), 0.05).unwrap();
    assert!((fh.p_seq[0][(0, 0)] - 0.15).abs() <= 1e-6);
    assert!((fh.p_seq[0][(0, 0)] - st.p[(0, 0)]).abs() <= 1e-6);
    assert!((fh.strategy.gains[0][(0, 0)] + 1.5).abs() <= 1e-6);
}

/// Without any output cost the finite-horizon problem has no reason to
/// stabilize, and the optimum is memoryless water-filling.
#[test]
fn finite_horizon_without_output_cost_ignores_instability() {
    let ftfi = ftfi_capacity(&scalar(2.0, 9.0).with_horizon(500)).unwrap();
    assert!((ftfi.capacity_nats - 0.5 * 10.0_f64.ln()).abs() <= 1e-8);
    assert_eq!(ftfi.regime, Regime::UnstableNoFeedback);
}

#[test]
fn finite_horizon_capacity_per_unit_time_approaches_stationary() {
    let stationary = 0.5 * 2.5_f64.ln();
    let rate = |n: usize, tq: f64| {
        let model = scalar(2.0, 9.0).with_horizon(n).with_terminal_q(s1(tq));
        let ftfi = ftfi_capacity(&model).unwrap();
        assert!(ftfi.budget_feasible && ftfi.constraint_active);
        ftfi.capacity_nats
    };
    let strong = rate(500, 10.0);
    assert!((strong - stationary).abs() <= 1e-3, "{strong}");
    // The transient gap shrinks like 1/n.
    let (short, long) = (rate(500, 1.0) - stationary, rate(2000, 1.0) - stationary);
    assert!(long.abs() <= short.abs() / 3.0, "{short} {long}");
}

#[test]
fn feedback_dominates_nofeedback() {
    for &c in &CS {
        for &kappa in &KAPPAS {
            let model = scalar(c, kappa);
            let fb = feedback_capacity(&model).unwrap().capacity_nats;
            let nf = nofeedback_capacity_q0(&model).unwrap().capacity_nats;
            assert!(fb >= nf - 1e-8, "C {c} kappa {kappa}");
            if c < 1.0 {
                assert!((fb - nf).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn feedback_equals_nofeedback_for_stable_mimo() {
    let mut g = Gen::new(31);
    for _ in 0..2 {
        let c = g.with_radius(2, 0.7);
        let d = g.matrix(2, 2) + Mat::identity(2, 2);
        let kv = g.pd(2, 0.3);
        let model = ChannelModel::time_invariant(c, d, kv, Mat::identity(2, 2), Mat::zeros(2, 2), 4.0);
        let fb = feedback_capacity(&model).unwrap();
        let nf = nofeedback_capacity_q0(&model).unwrap();
        assert_eq!(fb.solution.regime, Regime::StableNoFeedback);
        assert!((fb.capacity_nats - nf.capacity_nats).abs() <= 1e-8);
    }
}

#[test]
fn log_c_bound_holds_where_supported() {
    for &c in &[1.5_f64, 2.0, 3.0] {
        let threshold = c.powi(4) - 1.0;
        for factor in [1.0, 1.5, 4.0] {
            let fb = feedback_capacity(&scalar(c, threshold * factor)).unwrap();
            assert!(fb.capacity_nats >= c.ln() - 1e-9);
        }
        let below = feedback_capacity(&scalar(c, 0.5 * (c * c - 1.0 + threshold))).unwrap();
        assert!(below.capacity_nats < c.ln());
    }
}

/// Independent recompute of the stationary cost through fixed-point
/// iteration of the output covariance.
#[test]
fn matched_cost_recomputes_independently() {
    let c = Mat::from_row_slice(2, 2, &[1.2, 0.4, -0.1, 0.9]);
    let d = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]);
    let kv = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.5]);
    let r = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let q = Mat::identity(2, 2) * 0.3;
    let kappa = 15.0;
    let fb = feedback_capacity(&ChannelModel::time_invariant(c.clone(), d.clone(), kv.clone(), r.clone(), q.clone(), kappa))
        .unwrap();
    assert!(fb.budget_feasible);
    let sol = &fb.solution;
    let acl = &c + &d * &sol.gain;
    let w = &d * &sol.kz * d.transpose() + &kv;
    let mut k = Mat::zeros(2, 2);
    for _ in 0..20_000 {
        k = &acl * &k * acl.transpose() + &w;
    }
    let cost = (&r * (&sol.gain * &k * sol.gain.transpose() + &sol.kz)).trace() + (&q * &k).trace();
    assert!((cost - kappa).abs() <= 1e-6 * (1.0 + kappa), "{cost}");
    let rate = 0.5 * (w.determinant() / kv.determinant()).ln();
    assert!((rate - fb.capacity_nats).abs() <= 1e-9);
}

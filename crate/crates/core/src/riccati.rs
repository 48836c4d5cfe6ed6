//! Backward Riccati recursion and the algebraic Riccati equation of the
//! control part.
//!
//! With Lagrange multiplier `s`, one backward step maps `P⁺` to the Schur
//! complement
//!
//! ```text
//! H11 = CᵀP⁺C + sQ,   H12 = CᵀP⁺D,   H22 = DᵀP⁺D + sR
//! P   = H11 − H12 H22⁻¹ H12ᵀ,        Γ = −H22⁻¹ H12ᵀ
//! ```
//!
//! The recursion is homogeneous of degree one in `(P, s)`, so the gain does
//! not depend on `s` and `P(s) = s·P(1)`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{cholesky, is_psd, sym_sqrt, symmetrize};
use crate::stability::{is_detectable, is_stabilizable, spectral_radius, StabilityError};
use crate::tolerances::{MAX_ITER_ARE, TOL_ARE};
use crate::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum RiccatiError {
    #[error("Lagrange multiplier must be positive and finite, got {0}")]
    InvalidMultiplier(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("H22 = DᵀPD + sR is numerically singular")]
    SingularH22,
    #[error("stabilizability test failed for (C,D)")]
    NotStabilizable,
    #[error("detectability test failed for (G,C) and no stabilizing fixed point was found")]
    NotDetectable,
    #[error("Riccati iteration did not converge in {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiStepBlocks {
    pub h11: Mat,
    pub h12: Mat,
    pub h22: Mat,
}

fn check_dims(p: &Mat, c: &Mat, d: &Mat, q: &Mat, r: &Mat) -> Result<(), RiccatiError> {
    let n = c.nrows();
    let m = d.ncols();
    let ok = c.is_square()
        && p.shape() == (n, n)
        && d.nrows() == n
        && q.shape() == (n, n)
        && r.shape() == (m, m);
    if ok {
        Ok(())
    } else {
        Err(RiccatiError::DimensionMismatch(format!(
            "P {:?}, C {:?}, D {:?}, Q {:?}, R {:?}",
            p.shape(),
            c.shape(),
            d.shape(),
            q.shape(),
            r.shape()
        )))
    }
}

fn check_multiplier(s: f64) -> Result<(), RiccatiError> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(RiccatiError::InvalidMultiplier(s))
    }
}

/// One backward step from `P⁺ = p_next`.
pub fn riccati_backward_step(
    p_next: &Mat,
    c: &Mat,
    d: &Mat,
    q: &Mat,
    r: &Mat,
    s: f64,
) -> Result<(Mat, RiccatiStepBlocks), RiccatiError> {
    check_dims(p_next, c, d, q, r)?;
    check_multiplier(s)?;
    let ct_p = c.transpose() * p_next;
    let blocks = RiccatiStepBlocks {
        h11: symmetrize(&(&ct_p * c + q * s)),
        h12: &ct_p * d,
        h22: symmetrize(&(d.transpose() * p_next * d + r * s)),
    };
    let chol = cholesky(&blocks.h22).ok_or(RiccatiError::SingularH22)?;
    let h22_inv_h21 = chol.solve(&blocks.h12.transpose());
    let p = symmetrize(&(&blocks.h11 - &blocks.h12 * h22_inv_h21));
    Ok((p, blocks))
}

/// `Γ = −H22⁻¹ H12ᵀ`.
pub fn optimal_gain(blocks: &RiccatiStepBlocks) -> Result<Mat, RiccatiError> {
    let chol = cholesky(&blocks.h22).ok_or(RiccatiError::SingularH22)?;
    Ok(-chol.solve(&blocks.h12.transpose()))
}

/// `‖P − f(P)‖_F / (1 + ‖P‖_F)`.
pub fn are_residual(p: &Mat, c: &Mat, d: &Mat, q: &Mat, r: &Mat, s: f64) -> Result<f64, RiccatiError> {
    let (next, _) = riccati_backward_step(p, c, d, q, r, s)?;
    Ok((p - next).norm() / (1.0 + p.norm()))
}

/// Where the value iteration was started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AreStart {
    TerminalCost,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreSolution {
    pub p: Mat,
    pub gain: Mat,
    pub closed_loop: Mat,
    pub spectral_radius: f64,
    pub stabilizing: bool,
    pub residual: f64,
    pub iterations: usize,
    pub start: AreStart,
    /// Outcome of the detectability test for `(Q^{1/2}, C)`.
    pub detectable: bool,
}

struct Iterate {
    p: Mat,
    blocks: RiccatiStepBlocks,
    residual: f64,
    iterations: usize,
}

fn value_iteration(
    start: Mat,
    c: &Mat,
    d: &Mat,
    q: &Mat,
    r: &Mat,
    s: f64,
) -> Result<Iterate, RiccatiError> {
    let mut p = start;
    let mut residual = f64::INFINITY;
    for k in 1..=MAX_ITER_ARE {
        let (next, _) = riccati_backward_step(&p, c, d, q, r, s)?;
        residual = (&next - &p).norm() / (1.0 + next.norm());
        p = next;
        if residual <= TOL_ARE {
            // Polish to round-off: keep stepping while the residual shrinks,
            // returning the iterate with the smallest own residual.
            let mut iterations = k;
            let mut best: Option<Iterate> = None;
            let mut last = f64::INFINITY;
            loop {
                let (next, blocks) = riccati_backward_step(&p, c, d, q, r, s)?;
                let own = (&next - &p).norm() / (1.0 + p.norm());
                if best.as_ref().is_none_or(|b| own < b.residual) {
                    best = Some(Iterate {
                        p: p.clone(),
                        blocks,
                        residual: own,
                        iterations,
                    });
                }
                if own >= last || own == 0.0 || iterations >= MAX_ITER_ARE {
                    return Ok(best.expect("at least one polish step"));
                }
                last = own;
                p = next;
                iterations += 1;
            }
        }
    }
    Err(RiccatiError::NotConverged {
        iterations: MAX_ITER_ARE,
        residual,
    })
}

fn finish(it: Iterate, c: &Mat, d: &Mat, start: AreStart, detectable: bool) -> Result<AreSolution, RiccatiError> {
    let gain = optimal_gain(&it.blocks)?;
    let closed_loop = c + d * &gain;
    let spectrum = spectral_radius(&closed_loop)?;
    Ok(AreSolution {
        p: it.p,
        gain,
        closed_loop,
        spectral_radius: spectrum.spectral_radius,
        stabilizing: spectrum.stable,
        residual: it.residual,
        iterations: it.iterations,
        start,
        detectable,
    })
}

/// Stabilizing solution of `P = f(P)` by value iteration from `sQ`.
///
/// When `(Q^{1/2}, C)` is not detectable the iteration from `sQ` can settle
/// on a non-stabilizing fixed point (e.g. `P = 0` for `Q = 0`, `|C| > 1`);
/// the iteration is then restarted from `I` and its limit accepted only if
/// it stabilizes `C + DΓ`.
pub fn solve_are(c: &Mat, d: &Mat, q: &Mat, r: &Mat, s: f64) -> Result<AreSolution, RiccatiError> {
    let n = c.nrows();
    check_dims(&Mat::zeros(n, n), c, d, q, r)?;
    check_multiplier(s)?;
    if !is_stabilizable(c, d)? {
        return Err(RiccatiError::NotStabilizable);
    }
    let detectable = is_detectable(&sym_sqrt(q), c)?;
    let from_cost = value_iteration(q * s, c, d, q, r, s);
    match from_cost {
        Ok(it) => {
            let sol = finish(it, c, d, AreStart::TerminalCost, detectable)?;
            if sol.stabilizing {
                return Ok(sol);
            }
        }
        Err(e) if detectable => return Err(e),
        Err(_) => {}
    }
    let it = value_iteration(Mat::identity(n, n), c, d, q, r, s)?;
    let sol = finish(it, c, d, AreStart::Identity, detectable)?;
    if sol.stabilizing {
        Ok(sol)
    } else {
        Err(RiccatiError::NotDetectable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    /// Stabilizable and detectable: the unique PSD solution.
    Unique,
    /// Stabilizing only: unique among stabilizing solutions.
    Conditional,
    /// Not stabilizing; no certificate.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreClassification {
    pub psd: bool,
    pub stabilizing: bool,
    pub stabilizable: bool,
    pub detectable: bool,
    pub uniqueness: Uniqueness,
    /// `None` when the candidate makes `H22` singular.
    pub residual: Option<f64>,
}

/// Certificates for a candidate ARE solution `p`.
pub fn classify_are(p: &Mat, c: &Mat, d: &Mat, q: &Mat, r: &Mat, s: f64) -> Result<AreClassification, RiccatiError> {
    check_dims(p, c, d, q, r)?;
    check_multiplier(s)?;
    let psd = is_psd(p);
    let stabilizable = is_stabilizable(c, d)?;
    let detectable = is_detectable(&sym_sqrt(q), c)?;
    let step = riccati_backward_step(p, c, d, q, r, s);
    let (stabilizing, residual) = match step {
        Ok((next, blocks)) => {
            let gain = optimal_gain(&blocks)?;
            let stable = spectral_radius(&(c + d * gain))?.stable;
            (stable, Some((p - next).norm() / (1.0 + p.norm())))
        }
        Err(RiccatiError::SingularH22) => (false, None),
        Err(e) => return Err(e),
    };
    let uniqueness = if !stabilizing {
        Uniqueness::None
    } else if psd && stabilizable && detectable {
        Uniqueness::Unique
    } else {
        Uniqueness::Conditional
    };
    Ok(AreClassification {
        psd,
        stabilizing,
        stabilizable,
        detectable,
        uniqueness,
        residual,
    })
}

impl AreSolution {
    pub fn classify(&self, c: &Mat, d: &Mat, q: &Mat, r: &Mat, s: f64) -> Result<AreClassification, RiccatiError> {
        classify_are(&self.p, c, d, q, r, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use proptest::prelude::*;

    fn s1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn step1(p: f64, c: f64, d: f64, q: f64, r: f64, s: f64) -> (f64, RiccatiStepBlocks) {
        let (p, b) = riccati_backward_step(&s1(p), &s1(c), &s1(d), &s1(q), &s1(r), s).unwrap();
        (p[(0, 0)], b)
    }

    #[test]
    fn backward_step_examples() {
        assert!((step1(3.0, 2.0, 1.0, 0.0, 1.0, 1.0).0 - 3.0).abs() < 1e-14);
        assert_eq!(step1(0.0, 2.0, 1.0, 0.0, 1.0, 1.0).0, 0.0);
        assert!((step1(1.0, 0.5, 1.0, 0.0, 1.0, 1.0).0 - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_multiplier_and_shapes() {
        let e = riccati_backward_step(&s1(1.0), &s1(1.0), &s1(1.0), &s1(0.0), &s1(1.0), 0.0);
        assert_eq!(e.unwrap_err(), RiccatiError::InvalidMultiplier(0.0));
        let e = riccati_backward_step(&Mat::zeros(2, 2), &s1(1.0), &s1(1.0), &s1(0.0), &s1(1.0), 1.0);
        assert!(matches!(e, Err(RiccatiError::DimensionMismatch(_))));
    }

    #[test]
    fn gain_examples() {
        let (_, b) = step1(3.0, 2.0, 1.0, 0.0, 1.0, 1.0);
        assert!((optimal_gain(&b).unwrap()[(0, 0)] + 1.5).abs() < 1e-15);
        let (_, b) = step1(0.0, 2.0, 1.0, 0.0, 1.0, 1.0);
        assert_eq!(optimal_gain(&b).unwrap()[(0, 0)], 0.0);
        let (_, b) = step1(0.15, 0.5, 1.0, 0.0, 1.0, 0.05);
        assert!((optimal_gain(&b).unwrap()[(0, 0)] + 0.375).abs() < 1e-14);
    }

    #[test]
    fn solve_are_examples() {
        let sol = solve_are(&s1(2.0), &s1(1.0), &s1(0.0), &s1(1.0), 1.0).unwrap();
        assert!((sol.p[(0, 0)] - 3.0).abs() < 1e-9);
        assert!((sol.gain[(0, 0)] + 1.5).abs() < 1e-9);
        assert!((sol.closed_loop[(0, 0)] - 0.5).abs() < 1e-9);
        assert!(sol.stabilizing && !sol.detectable);
        assert_eq!(sol.start, AreStart::Identity);

        for s in [0.01, 0.3, 5.0] {
            let sol = solve_are(&s1(0.5), &s1(1.0), &s1(0.0), &s1(1.0), s).unwrap();
            assert_eq!(sol.p[(0, 0)], 0.0);
            assert_eq!(sol.gain[(0, 0)], 0.0);
        }

        let q = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sol = solve_are(&Mat::zeros(2, 2), &Mat::identity(2, 2), &q, &Mat::identity(2, 2), 0.7).unwrap();
        assert!((&sol.p - &q * 0.7).norm() < 1e-14);
        assert!(sol.gain.norm() < 1e-14);
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let c = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let d = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let e = solve_are(&c, &d, &Mat::zeros(2, 2), &s1(1.0), 1.0);
        assert_eq!(e.unwrap_err(), RiccatiError::NotStabilizable);
    }

    #[test]
    fn classification_examples() {
        let (c, d, q, r) = (s1(2.0), s1(1.0), s1(0.0), s1(1.0));
        let k = classify_are(&s1(3.0), &c, &d, &q, &r, 1.0).unwrap();
        assert!(k.psd && k.stabilizing);
        assert_eq!(k.uniqueness, Uniqueness::Conditional);
        // The other root of P² − 3P = 0 does not stabilize.
        let k = classify_are(&s1(0.0), &c, &d, &q, &r, 1.0).unwrap();
        assert!(k.psd && !k.stabilizing);
        assert_eq!(k.residual, Some(0.0));

        let k = classify_are(&s1(0.0), &s1(0.5), &d, &q, &r, 1.0).unwrap();
        assert!(k.stabilizing);
        assert_eq!(k.uniqueness, Uniqueness::Unique);

        let k = classify_are(&s1(-1.0), &c, &d, &q, &r, 1.0).unwrap();
        assert!(!k.psd);
    }

    #[test]
    fn scalar_quadratic_roots() {
        // Fixed points of P = C²Ps/(D²P + s) are 0 and s(C²−1)/D².
        let (c, d, s) = (2.0, 1.0, 1.0);
        for root in [0.0, s * (c * c - 1.0) / (d * d)] {
            let (p, _) = step1(root, c, d, 0.0, 1.0, s);
            assert!((p - root).abs() < 1e-14);
            let stab = classify_are(&s1(root), &s1(c), &s1(d), &s1(0.0), &s1(1.0), s).unwrap().stabilizing;
            assert_eq!(stab, root > 0.0);
        }
    }

    fn mat_strategy(n: usize, m: usize, scale: f64) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-scale..scale, n * m).prop_map(move |v| Mat::from_row_slice(n, m, &v))
    }

    fn psd_strategy(n: usize) -> impl Strategy<Value = Mat> {
        mat_strategy(n, n, 1.0).prop_map(|g| &g * g.transpose())
    }

    fn pd_strategy(n: usize) -> impl Strategy<Value = Mat> {
        psd_strategy(n).prop_map(move |g| g + Mat::identity(n, n) * 0.2)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scalar_unstable_root_and_gain(c in 1.05f64..4.0, neg in any::<bool>(), d in 0.3f64..3.0, r in 0.5f64..2.0, s in 0.01f64..5.0) {
            let c = if neg { -c } else { c };
            let sol = solve_are(&s1(c), &s1(d), &s1(0.0), &s1(r), s).unwrap();
            // With R ≠ 1 the root scales as s·R(C²−1)/D².
            let root = s * r * (c * c - 1.0) / (d * d);
            prop_assert!((sol.p[(0, 0)] - root).abs() <= 1e-12 * (1.0 + root));
            let g = -(c * c - 1.0) / (c * d);
            prop_assert!((sol.gain[(0, 0)] - g).abs() <= 1e-9 * (1.0 + g.abs()));
        }

        #[test]
        fn iterates_stay_psd(c in mat_strategy(2, 2, 1.5), d in mat_strategy(2, 1, 1.5), q in psd_strategy(2), s in 0.05f64..3.0) {
            let r = s1(1.0);
            let mut p = &q * s;
            for _ in 0..40 {
                p = riccati_backward_step(&p, &c, &d, &q, &r, s).unwrap().0;
                let scale = p.norm().max(1.0);
                prop_assert!(min_eigenvalue(&p) >= -1e-10 * scale);
            }
        }

        #[test]
        fn stabilizes_and_is_consistent(n in 2usize..=3, seed in mat_strategy(3, 3, 1.8), dseed in mat_strategy(3, 2, 1.5), g in mat_strategy(3, 3, 1.0), r in pd_strategy(2), s in 0.05f64..3.0) {
            let c = seed.view((0, 0), (n, n)).into_owned();
            let d = dseed.view((0, 0), (n, 2)).into_owned();
            let g = g.view((0, 0), (n, n)).into_owned();
            let q = g.transpose() * &g;
            prop_assume!(is_stabilizable(&c, &d).unwrap());
            prop_assume!(is_detectable(&g, &c).unwrap());
            let sol = solve_are(&c, &d, &q, &r, s).unwrap();
            prop_assert!(sol.stabilizing);
            prop_assert!(sol.spectral_radius < 1.0);
            prop_assert!(sol.residual <= TOL_ARE);
            let (_, blocks) = riccati_backward_step(&sol.p, &c, &d, &q, &r, s).unwrap();
            let rebuilt = &blocks.h11 + &blocks.h12 * &sol.gain;
            prop_assert!((rebuilt - &sol.p).norm() <= 1e-9 * (1.0 + sol.p.norm()));
        }

        #[test]
        fn gain_is_scale_free(c in mat_strategy(2, 2, 1.5), d in mat_strategy(2, 2, 1.5), q in psd_strategy(2), p in psd_strategy(2), s in 0.05f64..3.0, t in 0.1f64..10.0) {
            let r = Mat::identity(2, 2);
            let (pa, ba) = riccati_backward_step(&p, &c, &d, &q, &r, s).unwrap();
            let (pb, bb) = riccati_backward_step(&(&p * t), &c, &d, &q, &r, s * t).unwrap();
            prop_assert!((pa * t - pb).norm() <= 1e-9 * (1.0 + p.norm() * t));
            let (ga, gb) = (optimal_gain(&ba).unwrap(), optimal_gain(&bb).unwrap());
            prop_assert!((ga - gb).norm() <= 1e-8);
        }
    }
}

//! Feedback capacity from the Riccati, water-filling and Lyapunov pieces.
//!
//! For a fixed multiplier `s` the Lagrangian problem separates: the gain
//! `Γ` comes from the Riccati recursion alone, the innovations covariance
//! `K_Z` from a water-filling problem with weight `sR + DᵀP⁺D`. The
//! multiplier is then matched to the budget `κ`.
//!
//! Finite-horizon dynamic programming runs backward from `P(n+1) = 0`:
//!
//! ```text
//! P(i) = riccati_step(P(i+1); C_i, D_i, Q_i, R_i, s)      (Q_n = terminal_Q)
//! r(i) = r(i+1) + max_K f_i(K) − tr(P(i+1) K_{V_i}),      r(n+1) = s(n+1)κ
//! value = −E⟨B_{-1}, P(0) B_{-1}⟩ + r(0)
//! ```
//!
//! and `value = I − s·(total cost) + s(n+1)κ`, where `I` is the
//! directed information of the optimal strategy.

mod closed_form;
mod search;

pub use closed_form::{
    log_c_bound_threshold, scalar_feedback_capacity, scalar_kappa_min, ScalarCapacity, LOWER_BOUND_NOTE,
};
pub use search::{SearchMethod, SearchReport};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::trace_product;
use crate::model::{ChannelModel, ModelError, Strategy};
use crate::riccati::{
    optimal_gain, riccati_backward_step, solve_are, AreSolution, AreStart, RiccatiError,
};
use crate::stability::{lyapunov_residual, lyapunov_step, solve_lyapunov, spectral_radius, StabilityError};
use crate::tolerances::{TOL_COST, TOL_PSD};
use crate::waterfill::{WaterfillError, WaterfillProblem};
use crate::Mat;
use search::{match_multiplier, Evaluation, Outcome};

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Waterfill(#[from] WaterfillError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("Lagrange multiplier must be positive and finite, got {0}")]
    InvalidMultiplier(f64),
    #[error("operation requires a time-invariant model")]
    NotTimeInvariant,
    #[error("the no-feedback comparator requires Q = 0")]
    NonzeroQ,
    #[error("|C| = {0} is within tolerance of 1; the closed form is indeterminate")]
    BoundaryIndeterminate(f64),
    #[error("invalid scalar parameters: {0}")]
    InvalidScalar(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `Γ = 0`: the channel is stable and feedback is not used.
    StableNoFeedback,
    /// `Γ ≠ 0` stabilizes an unstable `C`.
    UnstableStabilized,
    /// `Γ ≠ 0` on a stable `C`, driven by the output cost `Q`.
    StabilizedWithQ,
    /// `K_Z = 0`: no information is transmitted.
    ZeroRate,
    /// `Γ = 0` on an unstable `C`; only a finite horizon without output
    /// cost leaves the channel unstabilized.
    UnstableNoFeedback,
}

fn is_zero(m: &Mat) -> bool {
    m.amax() <= TOL_PSD * 1e-2
}

fn classify(kz: &[&Mat], gains: &[&Mat], c_unstable: bool) -> Regime {
    if kz.iter().all(|k| is_zero(k)) {
        Regime::ZeroRate
    } else if gains.iter().all(|g| g.amax() == 0.0) {
        if c_unstable {
            Regime::UnstableNoFeedback
        } else {
            Regime::StableNoFeedback
        }
    } else if c_unstable {
        Regime::UnstableStabilized
    } else {
        Regime::StabilizedWithQ
    }
}

fn check_multiplier(s: f64) -> Result<(), CapacityError> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(CapacityError::InvalidMultiplier(s))
    }
}

fn cost_tolerance(kappa: f64) -> f64 {
    TOL_COST * (1.0 + kappa)
}

/// `tr(RΓMΓᵀ + RK_Z + QM)` for output second moment `M`.
pub fn step_cost(r: &Mat, q: &Mat, gain: &Mat, kz: &Mat, m: &Mat) -> f64 {
    trace_product(r, &(gain * m * gain.transpose())) + trace_product(r, kz) + trace_product(q, m)
}

// ---------------------------------------------------------------------------
// Finite horizon

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonSolution {
    pub s: f64,
    /// `P(0..=n)`.
    pub p_seq: Vec<Mat>,
    /// `r(0..=n)`.
    pub r_seq: Vec<f64>,
    pub strategy: Strategy,
    /// Output second moments `E{B_i B_iᵀ}` for `i = -1..=n`.
    pub kb_seq: Vec<Mat>,
    pub step_costs: Vec<f64>,
    /// `½ ln det(D_iK_{Z_i}D_iᵀ+K_{V_i})/det K_{V_i}` per step.
    pub step_information: Vec<f64>,
    /// Per-unit-time cost.
    pub achieved_cost: f64,
    /// `−E⟨B_{-1},P(0)B_{-1}⟩ + r(0)`.
    pub value_nats: f64,
    /// Directed information summed over the horizon.
    pub information_nats: f64,
    pub max_waterfill_pg: f64,
}

impl FiniteHorizonSolution {
    pub fn steps(&self) -> usize {
        self.p_seq.len()
    }

    pub fn rate_nats(&self) -> f64 {
        self.information_nats / self.steps() as f64
    }

    fn silent(&self) -> bool {
        self.strategy.innovations.iter().all(is_zero)
    }
}

pub fn finite_horizon_dp(model: &ChannelModel, s: f64) -> Result<FiniteHorizonSolution, CapacityError> {
    check_multiplier(s)?;
    let n = model.horizon;
    let p = model.output_dim;
    let steps = n + 1;

    let mut p_seq = vec![Mat::zeros(p, p); steps];
    let mut r_seq = vec![0.0; steps];
    let mut gains = vec![Mat::zeros(model.input_dim, p); steps];
    let mut kzs = vec![Mat::zeros(model.input_dim, model.input_dim); steps];
    let mut infos = vec![0.0; steps];
    let mut p_next = Mat::zeros(p, p);
    let mut r_next = s * steps as f64 * model.kappa;
    let mut warm: Option<Mat> = None;
    let mut max_pg = 0.0_f64;

    for i in (0..steps).rev() {
        let (c, d, kv, r) = (model.c(i), model.d(i), model.kv(i), model.r(i));
        let (p_i, blocks) = riccati_backward_step(&p_next, c, d, model.cost_q(i), r, s)?;
        gains[i] = optimal_gain(&blocks)?;
        let weight = r * s + d.transpose() * &p_next * d;
        let wf = WaterfillProblem::new(d.clone(), kv.clone(), weight)?;
        let sol = wf.solve_from(warm.as_ref())?;
        max_pg = max_pg.max(sol.pg_norm);
        infos[i] = wf.information(&sol.kz)?;
        r_seq[i] = r_next + sol.value - trace_product(&p_next, kv);
        warm = Some(sol.kz.clone());
        kzs[i] = sol.kz;
        p_seq[i] = p_i.clone();
        p_next = p_i;
        r_next = r_seq[i];
    }

    let mut kb_seq = Vec::with_capacity(steps + 1);
    kb_seq.push(model.initial_output.second_moment());
    let mut step_costs = Vec::with_capacity(steps);
    for i in 0..steps {
        let (c, d) = (model.c(i), model.d(i));
        let m_prev = &kb_seq[i];
        step_costs.push(step_cost(model.r(i), model.cost_q(i), &gains[i], &kzs[i], m_prev));
        let acl = c + d * &gains[i];
        let w = d * &kzs[i] * d.transpose() + model.kv(i);
        let next = lyapunov_step(m_prev, &acl, &w)?;
        kb_seq.push(next);
    }

    let achieved_cost = step_costs.iter().sum::<f64>() / steps as f64;
    let value_nats = -model.initial_output.expected_quadratic(&p_seq[0]) + r_seq[0];
    Ok(FiniteHorizonSolution {
        s,
        p_seq,
        r_seq,
        strategy: Strategy::time_varying(gains, kzs),
        kb_seq,
        step_costs,
        information_nats: infos.iter().sum(),
        step_information: infos,
        achieved_cost,
        value_nats,
        max_waterfill_pg: max_pg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtfiCapacity {
    pub solution: FiniteHorizonSolution,
    /// Directed information per unit time at `s*`.
    pub capacity_nats: f64,
    /// `None` when the budget cannot be met or never binds.
    pub s_star: Option<f64>,
    pub budget_feasible: bool,
    pub constraint_active: bool,
    pub regime: Regime,
    /// Lagrangian value per unit time at the returned multiplier.
    pub dual_per_step: f64,
    pub search: SearchReport,
}

pub fn ftfi_capacity(model: &ChannelModel) -> Result<FtfiCapacity, CapacityError> {
    let eval = |s: f64| {
        let sol = finite_horizon_dp(model, s)?;
        Ok(Evaluation {
            s,
            cost: sol.achieved_cost,
            dual: sol.value_nats,
            silent: sol.silent(),
            payload: sol,
        })
    };
    let (outcome, search) = match_multiplier(model.kappa, cost_tolerance(model.kappa), eval)?;
    let (e, feasible, active) = match outcome {
        Outcome::Matched(e) => (e, true, true),
        Outcome::Infeasible(e) => (e, false, true),
        Outcome::Inactive(e) => (e, true, false),
    };
    let sol = e.payload;
    let c_unstable = (0..sol.steps()).any(|i| {
        spectral_radius(model.c(i)).map(|r| !r.stable).unwrap_or(true)
    });
    let kz: Vec<&Mat> = sol.strategy.innovations.iter().collect();
    let gains: Vec<&Mat> = sol.strategy.gains.iter().collect();
    let regime = classify(&kz, &gains, c_unstable);
    let capacity_nats = if regime == Regime::ZeroRate { 0.0 } else { sol.rate_nats() };
    Ok(FtfiCapacity {
        capacity_nats,
        s_star: (feasible && active).then_some(e.s),
        budget_feasible: feasible,
        constraint_active: active,
        regime,
        dual_per_step: sol.value_nats / sol.steps() as f64,
        search,
        solution: sol,
    })
}

// ---------------------------------------------------------------------------
// Infinite horizon

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub s: f64,
    pub p: Mat,
    pub gain: Mat,
    pub kz: Mat,
    /// Invariant output covariance `K`.
    pub kb: Mat,
    pub rate_nats: f64,
    pub achieved_cost: f64,
    /// Average-reward Lagrangian value `J` at `s`.
    pub dual_value: f64,
    pub regime: Regime,
    pub closed_loop_radius: f64,
    pub are_residual: f64,
    pub are_iterations: usize,
    pub are_start: AreStart,
    pub detectable: bool,
    pub waterfill_pg: f64,
    pub waterfill_complementarity: f64,
    pub lyapunov_residual: f64,
}

impl StationarySolution {
    pub fn strategy(&self) -> Strategy {
        Strategy::stationary(self.gain.clone(), self.kz.clone())
    }
}

struct Parts<'a> {
    c: &'a Mat,
    d: &'a Mat,
    kv: &'a Mat,
    r: &'a Mat,
    q: &'a Mat,
    kappa: f64,
}

fn parts(model: &ChannelModel) -> Result<Parts<'_>, CapacityError> {
    if !model.time_invariant {
        return Err(CapacityError::NotTimeInvariant);
    }
    Ok(Parts {
        c: model.c(0),
        d: model.d(0),
        kv: model.kv(0),
        r: model.r(0),
        q: model.q(0),
        kappa: model.kappa,
    })
}

/// Assembles the stationary solution at `s` from an ARE solution at `s_are`,
/// using `P(s) = (s/s_are)·P(s_are)` and the scale-free gain.
fn assemble(
    m: &Parts<'_>,
    s: f64,
    are: &AreSolution,
    s_are: f64,
    warm: Option<&Mat>,
) -> Result<StationarySolution, CapacityError> {
    let p = if s == s_are { are.p.clone() } else { &are.p * (s / s_are) };
    let weight = m.r * s + m.d.transpose() * &p * m.d;
    let wf = WaterfillProblem::new(m.d.clone(), m.kv.clone(), weight)?;
    let sol = wf.solve_from(warm)?;
    let w = m.d * &sol.kz * m.d.transpose() + m.kv;
    let kb = solve_lyapunov(&are.closed_loop, &w).map_err(|e| {
        CapacityError::Internal(format!("stabilizing gain failed the Lyapunov solve: {e}"))
    })?;
    let achieved_cost = step_cost(m.r, m.q, &are.gain, &sol.kz, &kb);
    let rate_nats = wf.information(&sol.kz)?;
    let dual_value = sol.value - trace_product(&p, m.kv) + s * m.kappa;
    let c_unstable = !spectral_radius(m.c)?.stable;
    let regime = classify(&[&sol.kz], &[&are.gain], c_unstable);
    Ok(StationarySolution {
        s,
        lyapunov_residual: lyapunov_residual(&kb, &are.closed_loop, &w),
        p,
        gain: are.gain.clone(),
        rate_nats: if regime == Regime::ZeroRate { 0.0 } else { rate_nats },
        kz: sol.kz,
        kb,
        achieved_cost,
        dual_value,
        regime,
        closed_loop_radius: are.spectral_radius,
        are_residual: are.residual,
        are_iterations: are.iterations,
        are_start: are.start,
        detectable: are.detectable,
        waterfill_pg: sol.pg_norm,
        waterfill_complementarity: sol.complementarity,
    })
}

pub fn stationary_solve(model: &ChannelModel, s: f64) -> Result<StationarySolution, CapacityError> {
    check_multiplier(s)?;
    let m = parts(model)?;
    let are = solve_are(m.c, m.d, m.q, m.r, s)?;
    assemble(&m, s, &are, s, None)
}

fn kappa_min_from(m: &Parts<'_>, are: &AreSolution) -> Result<f64, CapacityError> {
    if are.gain.amax() == 0.0 && m.q.amax() == 0.0 {
        return Ok(0.0);
    }
    let k0 = solve_lyapunov(&are.closed_loop, m.kv)?;
    let zero = Mat::zeros(m.r.nrows(), m.r.ncols());
    Ok(step_cost(m.r, m.q, &are.gain, &zero, &k0))
}

/// Average cost of the stabilizing gain with `K_Z = 0`.
pub fn kappa_min(model: &ChannelModel) -> Result<f64, CapacityError> {
    let m = parts(model)?;
    let are = solve_are(m.c, m.d, m.q, m.r, 1.0)?;
    kappa_min_from(&m, &are)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackCapacity {
    pub solution: StationarySolution,
    pub capacity_nats: f64,
    /// `None` when `κ < κ_min` or the budget never binds.
    pub s_star: Option<f64>,
    pub kappa_min: f64,
    pub budget_feasible: bool,
    pub constraint_active: bool,
    pub search: SearchReport,
}

pub fn feedback_capacity(model: &ChannelModel) -> Result<FeedbackCapacity, CapacityError> {
    let m = parts(model)?;
    let are = solve_are(m.c, m.d, m.q, m.r, 1.0)?;
    let kmin = kappa_min_from(&m, &are)?;
    let mut warm: Option<Mat> = None;
    let eval = |s: f64| {
        let sol = assemble(&m, s, &are, 1.0, warm.as_ref())?;
        warm = Some(sol.kz.clone());
        Ok(Evaluation {
            s,
            cost: sol.achieved_cost,
            dual: sol.dual_value,
            silent: is_zero(&sol.kz),
            payload: sol,
        })
    };
    let (outcome, search) = match_multiplier(m.kappa, cost_tolerance(m.kappa), eval)?;
    let (e, feasible, active) = match outcome {
        Outcome::Matched(e) => (e, true, true),
        Outcome::Infeasible(e) => (e, false, true),
        Outcome::Inactive(e) => (e, true, false),
    };
    Ok(FeedbackCapacity {
        capacity_nats: e.payload.rate_nats,
        s_star: (feasible && active).then_some(e.s),
        kappa_min: kmin,
        budget_feasible: feasible,
        constraint_active: active,
        search,
        solution: e.payload,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoFeedbackCapacity {
    pub capacity_nats: f64,
    pub kz: Mat,
    /// Multiplier of `tr(RK_Z) ≤ κ`; `None` for unstable channels or `κ = 0`.
    pub multiplier: Option<f64>,
    pub channel_stable: bool,
}

/// Memoryless water-filling under `tr(RK_Z) ≤ κ`; zero for unstable `C`.
pub fn nofeedback_capacity_q0(model: &ChannelModel) -> Result<NoFeedbackCapacity, CapacityError> {
    let m = parts(model)?;
    if m.q.amax() != 0.0 || (model.horizon > 0 && model.terminal_q.amax() != 0.0) {
        return Err(CapacityError::NonzeroQ);
    }
    let q = m.d.ncols();
    let zero = NoFeedbackCapacity {
        capacity_nats: 0.0,
        kz: Mat::zeros(q, q),
        multiplier: None,
        channel_stable: true,
    };
    if !spectral_radius(m.c)?.stable {
        return Ok(NoFeedbackCapacity {
            channel_stable: false,
            ..zero
        });
    }
    if m.kappa == 0.0 {
        return Ok(zero);
    }
    let mut warm: Option<Mat> = None;
    let eval = |lambda: f64| {
        let wf = WaterfillProblem::new(m.d.clone(), m.kv.clone(), m.r * lambda)?;
        let sol = wf.solve_from(warm.as_ref())?;
        warm = Some(sol.kz.clone());
        let info = wf.information(&sol.kz)?;
        Ok(Evaluation {
            s: lambda,
            cost: trace_product(m.r, &sol.kz),
            dual: sol.value + lambda * m.kappa,
            silent: is_zero(&sol.kz),
            payload: (sol.kz, info),
        })
    };
    let (outcome, _) = match_multiplier(m.kappa, cost_tolerance(m.kappa), eval)?;
    match outcome {
        Outcome::Matched(e) => Ok(NoFeedbackCapacity {
            capacity_nats: e.payload.1,
            kz: e.payload.0,
            multiplier: Some(e.s),
            channel_stable: true,
        }),
        Outcome::Infeasible(_) | Outcome::Inactive(_) => Ok(zero),
    }
}

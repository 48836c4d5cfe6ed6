//! Numerical tolerances shared by every solver.

use serde::{Deserialize, Serialize};

/// Relative tolerance for PSD checks, scaled by the largest eigenvalue magnitude.
pub const TOL_PSD: f64 = 1e-10;
/// Margin inside the unit disc for spectral stability.
pub const TOL_SPEC: f64 = 1e-9;
/// Relative singular-value cutoff for numerical rank.
pub const TOL_RANK: f64 = 1e-9;
/// Residual bound for the algebraic Lyapunov solver.
pub const TOL_LYAP: f64 = 1e-10;
/// Relative fixed-point residual for the algebraic Riccati solver.
pub const TOL_ARE: f64 = 1e-11;
pub const MAX_ITER_ARE: usize = 100_000;
/// Projected-gradient and complementarity tolerance for water-filling.
pub const TOL_WF: f64 = 1e-9;
pub const MAX_ITER_WF: usize = 50_000;
/// Diagonal padding on the undriven blocks of a lifted noise covariance.
pub const EPS_REG: f64 = 1e-12;
/// Relative tolerance on `|cost - κ|` for the multiplier search.
pub const TOL_COST: f64 = 1e-10;

/// The resolved tolerance set, embedded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub psd: f64,
    pub spectral: f64,
    pub rank: f64,
    pub lyapunov: f64,
    pub riccati: f64,
    pub riccati_max_iter: usize,
    pub waterfill: f64,
    pub waterfill_max_iter: usize,
    pub regularization: f64,
    pub cost_match: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: TOL_PSD,
            spectral: TOL_SPEC,
            rank: TOL_RANK,
            lyapunov: TOL_LYAP,
            riccati: TOL_ARE,
            riccati_max_iter: MAX_ITER_ARE,
            waterfill: TOL_WF,
            waterfill_max_iter: MAX_ITER_WF,
            regularization: EPS_REG,
            cost_match: TOL_COST,
        }
    }
}

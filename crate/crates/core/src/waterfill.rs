//! Water-filling over the innovations covariance.
//!
//! Maximizes the concave objective
//!
//! ```text
//! f(K) = ½ ln det(D K Dᵀ + K_V) − ½ ln det K_V − tr(W K),   K ⪰ 0
//! ```
//!
//! by projected gradient ascent on the PSD cone. Steps follow the
//! Barzilai–Borwein rule and are safeguarded by an Armijo test along the
//! projection arc. `D` may be rectangular or rank deficient.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{cholesky, logdet_pd, project_psd, sym_eigen, symmetrize, trace_product};
use crate::tolerances::{MAX_ITER_WF, TOL_PSD, TOL_WF};
use crate::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum WaterfillError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("noise covariance not positive definite")]
    NoisePd,
    #[error("weight is not positive semidefinite (min eigenvalue {0:e})")]
    WeightNotPsd(f64),
    #[error("objective is unbounded: weight vanishes on a direction that D transmits")]
    Unbounded,
    #[error("water-filling did not converge in {iterations} iterations (projected gradient {pg_norm:e})")]
    NotConverged { iterations: usize, pg_norm: f64 },
    #[error("D = 0 with zero weight leaves the scalar problem undetermined")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillProblem {
    pub d: Mat,
    pub kv: Mat,
    pub weight: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillSolution {
    #[serde(skip)]
    pub kz: Mat,
    pub value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub complementarity: f64,
}

impl WaterfillProblem {
    pub fn new(d: Mat, kv: Mat, weight: Mat) -> Result<Self, WaterfillError> {
        let (p, q) = d.shape();
        if kv.shape() != (p, p) || weight.shape() != (q, q) {
            return Err(WaterfillError::DimensionMismatch(format!(
                "D {:?}, K_V {:?}, weight {:?}",
                d.shape(),
                kv.shape(),
                weight.shape()
            )));
        }
        if logdet_pd(&kv).is_none() {
            return Err(WaterfillError::NoisePd);
        }
        let weight = symmetrize(&weight);
        if q > 0 {
            let (vals, _) = sym_eigen(&weight);
            let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if vals[0] < -TOL_PSD * scale.max(f64::MIN_POSITIVE) {
                return Err(WaterfillError::WeightNotPsd(vals[0]));
            }
        }
        Ok(Self { d, kv, weight })
    }

    pub fn input_dim(&self) -> usize {
        self.d.ncols()
    }

    fn output_cov(&self, kz: &Mat) -> Mat {
        symmetrize(&(&self.d * kz * self.d.transpose() + &self.kv))
    }

    /// `½ ln det(DKDᵀ+K_V)/det K_V`.
    pub fn information(&self, kz: &Mat) -> Result<f64, WaterfillError> {
        let num = logdet_pd(&self.output_cov(kz)).ok_or(WaterfillError::NoisePd)?;
        let den = logdet_pd(&self.kv).ok_or(WaterfillError::NoisePd)?;
        Ok(0.5 * (num - den))
    }

    pub fn objective(&self, kz: &Mat) -> Result<f64, WaterfillError> {
        Ok(self.information(kz)? - trace_product(&self.weight, kz))
    }

    /// `½ Dᵀ(DKDᵀ+K_V)⁻¹D − W`.
    pub fn gradient(&self, kz: &Mat) -> Result<Mat, WaterfillError> {
        let chol = cholesky(&self.output_cov(kz)).ok_or(WaterfillError::NoisePd)?;
        let inner = chol.solve(&self.d);
        Ok(symmetrize(&((self.d.transpose() * inner) * 0.5 - &self.weight)))
    }

    /// A direction `v` with `Wv = 0` and `Dv ≠ 0` makes `f` grow without bound.
    fn is_unbounded(&self) -> bool {
        let q = self.input_dim();
        if q == 0 {
            return false;
        }
        let gain = match cholesky(&self.kv) {
            Some(ch) => self.d.transpose() * ch.solve(&self.d),
            None => return false,
        };
        let gain_scale = gain.norm();
        if gain_scale == 0.0 {
            return false;
        }
        let (vals, vecs) = sym_eigen(&self.weight);
        vals.iter().enumerate().any(|(i, &lam)| {
            let v = vecs.column(i);
            let transmitted = (v.transpose() * &gain * v)[(0, 0)];
            lam <= TOL_PSD * gain_scale && transmitted > TOL_PSD * gain_scale
        })
    }

    fn initial_point(&self) -> Mat {
        let q = self.input_dim();
        let w = self.weight.norm();
        if w == 0.0 {
            return Mat::zeros(q, q);
        }
        // Spectral norm of a PSD matrix is its largest eigenvalue.
        let top = sym_eigen(&self.weight).0[q - 1];
        let top = if top > 0.0 { top } else { w };
        Mat::identity(q, q) / (2.0 * top)
    }

    pub fn solve(&self) -> Result<WaterfillSolution, WaterfillError> {
        self.solve_from(None)
    }

    /// Projected gradient ascent, optionally warm-started. A warm start that
    /// stalls above tolerance is retried from the default initial point.
    pub fn solve_from(&self, start: Option<&Mat>) -> Result<WaterfillSolution, WaterfillError> {
        match self.ascend(start) {
            Err(WaterfillError::NotConverged { .. }) if start.is_some() => self.ascend(None),
            other => other,
        }
    }

    fn ascend(&self, start: Option<&Mat>) -> Result<WaterfillSolution, WaterfillError> {
        let q = self.input_dim();
        if self.is_unbounded() {
            return Err(WaterfillError::Unbounded);
        }
        if q == 0 || self.d.iter().all(|v| *v == 0.0) {
            let kz = Mat::zeros(q, q);
            return Ok(WaterfillSolution {
                value: 0.0,
                kz,
                iterations: 0,
                pg_norm: 0.0,
                complementarity: 0.0,
            });
        }
        let mut k = match start {
            Some(s) if s.shape() == (q, q) => project_psd(s),
            _ => self.initial_point(),
        };
        let mut f = self.objective(&k)?;
        let mut g = self.gradient(&k)?;
        let mut step = 1.0 / (self.weight.norm() + self.gradient(&Mat::zeros(q, q))?.norm()).max(1e-300);
        let mut pg_norm = f64::INFINITY;
        for it in 0..MAX_ITER_WF {
            pg_norm = (project_psd(&(&k + &g)) - &k).norm();
            let comp = trace_product(&k, &g).abs();
            let (next, f_next) = match self.armijo(&k, f, &g, step)? {
                Some(found) => found,
                None => {
                    // No ascent is possible above round-off.
                    if pg_norm <= TOL_WF && comp <= TOL_WF {
                        return Ok(self.finish(k, f, it, pg_norm, comp));
                    }
                    return Err(WaterfillError::NotConverged {
                        iterations: it,
                        pg_norm,
                    });
                }
            };
            let dk = &next - &k;
            let moved = dk.norm();
            if pg_norm <= TOL_WF && comp <= TOL_WF && moved <= 1e-12 * (1.0 + k.norm()) {
                return Ok(self.finish(next, f_next, it + 1, pg_norm, comp));
            }
            let g_next = self.gradient(&next)?;
            let curvature = -trace_product(&dk, &(&g_next - &g));
            step = if curvature > 0.0 {
                (moved * moved / curvature).clamp(1e-12, 1e12)
            } else {
                (step * 4.0).min(1e12)
            };
            k = next;
            f = f_next;
            g = g_next;
        }
        Err(WaterfillError::NotConverged {
            iterations: MAX_ITER_WF,
            pg_norm,
        })
    }

    /// Backtracks `t` until `f(Π(K+tG)) ≥ f(K) + σ⟨G, Π(K+tG) − K⟩`, up to
    /// round-off in `f`; near the optimum the gradient still steers the step
    /// after objective differences drop below machine precision.
    fn armijo(&self, k: &Mat, f: f64, g: &Mat, mut t: f64) -> Result<Option<(Mat, f64)>, WaterfillError> {
        const SIGMA: f64 = 1e-4;
        let slack = 8.0 * f64::EPSILON * (1.0 + f.abs());
        for _ in 0..80 {
            let trial = project_psd(&(k + g * t));
            let ascent = trace_product(g, &(&trial - k));
            let f_trial = self.objective(&trial)?;
            if f_trial >= f + SIGMA * ascent - slack && ascent > 0.0 {
                return Ok(Some((trial, f_trial)));
            }
            if ascent <= 0.0 && f_trial >= f {
                return Ok(None);
            }
            t *= 0.5;
        }
        Ok(None)
    }

    fn finish(&self, kz: Mat, value: f64, iterations: usize, pg_norm: f64, complementarity: f64) -> WaterfillSolution {
        WaterfillSolution {
            kz,
            value,
            iterations,
            pg_norm,
            complementarity,
        }
    }
}

/// Closed form of the scalar problem: `k* = max(0, 1/(2w) − K_V/D²)`.
///
/// Returns `(+∞, +∞)` when `w = 0` and `D ≠ 0`.
pub fn scalar_solve(d: f64, kv: f64, weight: f64) -> Result<(f64, f64), WaterfillError> {
    if kv <= 0.0 {
        return Err(WaterfillError::NoisePd);
    }
    if weight < 0.0 {
        return Err(WaterfillError::WeightNotPsd(weight));
    }
    if weight == 0.0 {
        return if d == 0.0 {
            Err(WaterfillError::Degenerate)
        } else {
            Ok((f64::INFINITY, f64::INFINITY))
        };
    }
    let kz = if d == 0.0 {
        0.0
    } else {
        (0.5 / weight - kv / (d * d)).max(0.0)
    };
    let value = 0.5 * ((d * d * kz + kv) / kv).ln() - weight * kz;
    Ok((kz, value))
}

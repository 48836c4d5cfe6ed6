//! Linear-systems tests and discrete Lyapunov equations.
//!
//! A square matrix is exponentially stable when its spectrum lies in the
//! open unit disc; here that means spectral radius `< 1 - TOL_SPEC`.
//! Controllability uses the rank of `[B, AB, …, A^{n-1}B]`;
//! stabilizability and detectability use the PBH test on the modes outside
//! the stable region.

use nalgebra::Schur;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{numerical_rank, symmetrize};
use crate::tolerances::{TOL_LYAP, TOL_RANK, TOL_SPEC};
use crate::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigenvalue computation did not converge")]
    EigenFailure,
    #[error("closed loop is not exponentially stable (spectral radius {0})")]
    NotExponentiallyStable(f64),
    #[error("Lyapunov system is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<(f64, f64)>,
    pub spectral_radius: f64,
    pub stable: bool,
}

impl SpectrumReport {
    pub fn complex_eigenvalues(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .map(|&(re, im)| Complex64::new(re, im))
            .collect()
    }
}

fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>, StabilityError> {
    if !a.is_square() {
        return Err(StabilityError::NotSquare(a.nrows(), a.ncols()));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(StabilityError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(a: &Mat) -> Result<SpectrumReport, StabilityError> {
    let eigs = eigenvalues(a)?;
    let radius = eigs.iter().fold(0.0_f64, |r, l| r.max(l.norm()));
    Ok(SpectrumReport {
        eigenvalues: eigs.iter().map(|l| (l.re, l.im)).collect(),
        spectral_radius: radius,
        stable: radius < 1.0 - TOL_SPEC,
    })
}

fn check_pair(a: &Mat, b_rows: usize, what: &str) -> Result<(), StabilityError> {
    if !a.is_square() {
        return Err(StabilityError::NotSquare(a.nrows(), a.ncols()));
    }
    if b_rows != a.nrows() {
        return Err(StabilityError::DimensionMismatch(format!(
            "{what}: A is {}x{}, other factor has {b_rows} rows",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let k = b.ncols();
    let mut out = Mat::zeros(n, n * k);
    let mut block = b.clone();
    for j in 0..n {
        out.view_mut((0, j * k), (n, k)).copy_from(&block);
        block = a * block;
    }
    out
}

pub fn is_controllable(a: &Mat, b: &Mat) -> Result<bool, StabilityError> {
    check_pair(a, b.nrows(), "controllability")?;
    let n = a.nrows();
    Ok(numerical_rank(&controllability_matrix(a, b), TOL_RANK) == n)
}

pub fn is_observable(c: &Mat, a: &Mat) -> Result<bool, StabilityError> {
    check_pair(a, c.ncols(), "observability")?;
    is_controllable(&a.transpose(), &c.transpose())
}

/// PBH: every eigenvalue with `|λ| ≥ 1 - TOL_SPEC` must keep `[A - λI, B]` at full row rank.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> Result<bool, StabilityError> {
    check_pair(a, b.nrows(), "stabilizability")?;
    let n = a.nrows();
    for lambda in eigenvalues(a)? {
        if lambda.norm() < 1.0 - TOL_SPEC {
            continue;
        }
        let pencil = nalgebra::DMatrix::<Complex64>::from_fn(n, n + b.ncols(), |i, j| {
            if j < n {
                let diag = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
                Complex64::new(a[(i, j)], 0.0) - diag
            } else {
                Complex64::new(b[(i, j - n)], 0.0)
            }
        });
        if numerical_rank(&pencil, TOL_RANK) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn is_detectable(g: &Mat, a: &Mat) -> Result<bool, StabilityError> {
    check_pair(a, g.ncols(), "detectability")?;
    is_stabilizable(&a.transpose(), &g.transpose())
}

fn check_lyapunov_dims(k: Option<&Mat>, acl: &Mat, w: &Mat) -> Result<(), StabilityError> {
    if !acl.is_square() {
        return Err(StabilityError::NotSquare(acl.nrows(), acl.ncols()));
    }
    let n = acl.nrows();
    let bad = |m: &Mat| m.nrows() != n || m.ncols() != n;
    if bad(w) || k.is_some_and(bad) {
        return Err(StabilityError::DimensionMismatch(format!(
            "Lyapunov operands must all be {n}x{n}"
        )));
    }
    Ok(())
}

/// One step `K ← Acl K Aclᵀ + W`.
pub fn lyapunov_step(k_prev: &Mat, acl: &Mat, w: &Mat) -> Result<Mat, StabilityError> {
    check_lyapunov_dims(Some(k_prev), acl, w)?;
    Ok(symmetrize(&(acl * k_prev * acl.transpose() + w)))
}

/// Unique symmetric solution of `Σ = Acl Σ Aclᵀ + W` for stable `Acl`.
///
/// Solved as a dense linear system over the `n(n+1)/2` upper-triangular
/// unknowns.
pub fn solve_lyapunov(acl: &Mat, w: &Mat) -> Result<Mat, StabilityError> {
    check_lyapunov_dims(None, acl, w)?;
    let report = spectral_radius(acl)?;
    if !report.stable {
        return Err(StabilityError::NotExponentiallyStable(report.spectral_radius));
    }
    let n = acl.nrows();
    let idx = |i: usize, j: usize| -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };
    let m = n * (n + 1) / 2;
    let mut sys = Mat::zeros(m, m);
    let mut rhs = nalgebra::DVector::zeros(m);
    let ws = symmetrize(w);
    for i in 0..n {
        for j in i..n {
            let row = idx(i, j);
            rhs[row] = ws[(i, j)];
            sys[(row, row)] += 1.0;
            for l in 0..n {
                for k in 0..n {
                    sys[(row, idx(l, k))] -= acl[(i, l)] * acl[(j, k)];
                }
            }
        }
    }
    let lu = sys.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(StabilityError::Singular)?;
    // One round of iterative refinement.
    let resid = &rhs - &sys * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    let sigma = Mat::from_fn(n, n, |i, j| sol[idx(i, j)]);
    Ok(sigma)
}

/// `‖Σ − Acl Σ Aclᵀ − W‖_F`.
pub fn lyapunov_residual(sigma: &Mat, acl: &Mat, w: &Mat) -> f64 {
    (sigma - acl * sigma * acl.transpose() - w).norm()
}

/// `true` when the residual meets `TOL_LYAP · (1 + ‖W‖_F)`.
pub fn lyapunov_converged(sigma: &Mat, acl: &Mat, w: &Mat) -> bool {
    lyapunov_residual(sigma, acl, w) <= TOL_LYAP * (1.0 + w.norm())
}

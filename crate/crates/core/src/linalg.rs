//! Small dense helpers on symmetric matrices.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::tolerances::TOL_PSD;
use crate::Mat;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Eigenvalues (ascending) and eigenvectors of the symmetric part of `m`.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    sym_eigen(m).0[0]
}

/// `true` when the smallest eigenvalue is no lower than `-TOL_PSD · max|λ|`.
pub fn is_psd(m: &Mat) -> bool {
    if m.is_empty() {
        return true;
    }
    let (values, _) = sym_eigen(m);
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    values[0] >= -TOL_PSD * scale
}

/// Euclidean projection onto the PSD cone by clipping eigenvalues.
pub fn project_psd(m: &Mat) -> Mat {
    if m.is_empty() {
        return m.clone();
    }
    let (values, vectors) = sym_eigen(m);
    if values[0] >= 0.0 {
        return symmetrize(m);
    }
    let clipped = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| v.max(0.0)),
    ));
    symmetrize(&(&vectors * clipped * vectors.transpose()))
}

/// Symmetric PSD square root; negative eigenvalues are treated as zero.
pub fn sym_sqrt(m: &Mat) -> Mat {
    if m.iter().all(|v| *v == 0.0) {
        return Mat::zeros(m.nrows(), m.ncols());
    }
    let (values, vectors) = sym_eigen(m);
    let roots = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| v.max(0.0).sqrt()),
    ));
    symmetrize(&(&vectors * roots * vectors.transpose()))
}

pub fn cholesky(m: &Mat) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m))
}

/// `ln det m` for a positive-definite `m`, `None` otherwise.
pub fn logdet_pd(m: &Mat) -> Option<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Numerical rank with singular values below `rel_tol · σ_max` discarded.
pub fn numerical_rank<T>(m: &DMatrix<T>, rel_tol: f64) -> usize
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|v| **v > rel_tol * smax).count()
}

/// `trace(a · b)` without forming the product.
pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

//! Channel and cost models.
//!
//! A [`ChannelModel`] describes the first-order channel
//! `B_i = C_i B_{i-1} + D_i A_i + V_i`, `V_i ~ N(0, K_{V_i})`, with the
//! average power constraint
//! `(1/(n+1)) Σ E{⟨A_i, R_i A_i⟩ + ⟨B_{i-1}, Q_i B_{i-1}⟩} ≤ κ`.
//! The last step uses `terminal_q` in place of `Q_n`.

mod memory;
pub mod schema;

pub use memory::{augment_memory, AugmentedModel, MemoryJModel};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{is_psd, is_symmetric, min_eigenvalue};
use crate::{Mat, Vector};

/// Distribution of the output `B_{-1}` preceding the first transmission.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialOutput {
    Fixed(Vector),
    Gaussian { mean: Vector, cov: Mat },
}

impl InitialOutput {
    pub fn zeros(p: usize) -> Self {
        InitialOutput::Fixed(Vector::zeros(p))
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialOutput::Fixed(b) => b.len(),
            InitialOutput::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Second moment `E{B_{-1} B_{-1}ᵀ}`.
    pub fn second_moment(&self) -> Mat {
        match self {
            InitialOutput::Fixed(b) => b * b.transpose(),
            InitialOutput::Gaussian { mean, cov } => mean * mean.transpose() + cov,
        }
    }

    /// `E⟨B_{-1}, P B_{-1}⟩`.
    pub fn expected_quadratic(&self, p: &Mat) -> f64 {
        match self {
            InitialOutput::Fixed(b) => (b.transpose() * p * b)[(0, 0)],
            InitialOutput::Gaussian { mean, cov } => {
                (mean.transpose() * p * mean)[(0, 0)] + crate::linalg::trace_product(p, cov)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Last time index `n`; the model covers steps `0..=n`.
    pub horizon: usize,
    pub output_dim: usize,
    pub input_dim: usize,
    pub c_seq: Vec<Mat>,
    pub d_seq: Vec<Mat>,
    pub kv_seq: Vec<Mat>,
    pub r_seq: Vec<Mat>,
    pub q_seq: Vec<Mat>,
    pub terminal_q: Mat,
    pub kappa: f64,
    pub initial_output: InitialOutput,
    /// When set, every sequence holds a single element broadcast over time.
    pub time_invariant: bool,
}

impl ChannelModel {
    /// Time-invariant model with horizon 0, `terminal_q = q` and `B_{-1} = 0`.
    pub fn time_invariant(c: Mat, d: Mat, kv: Mat, r: Mat, q: Mat, kappa: f64) -> Self {
        let p = c.nrows();
        let q_in = d.ncols();
        Self {
            horizon: 0,
            output_dim: p,
            input_dim: q_in,
            terminal_q: q.clone(),
            c_seq: vec![c],
            d_seq: vec![d],
            kv_seq: vec![kv],
            r_seq: vec![r],
            q_seq: vec![q],
            kappa,
            initial_output: InitialOutput::zeros(p),
            time_invariant: true,
        }
    }

    /// Scalar time-invariant model.
    pub fn scalar(c: f64, d: f64, kv: f64, r: f64, q: f64, kappa: f64) -> Self {
        let s = |x: f64| Mat::from_element(1, 1, x);
        Self::time_invariant(s(c), s(d), s(kv), s(r), s(q), kappa)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_terminal_q(mut self, terminal_q: Mat) -> Self {
        self.terminal_q = terminal_q;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_initial_output(mut self, initial: InitialOutput) -> Self {
        self.initial_output = initial;
        self
    }

    fn at(seq: &[Mat], time_invariant: bool, i: usize) -> &Mat {
        if time_invariant {
            &seq[0]
        } else {
            &seq[i]
        }
    }

    pub fn c(&self, i: usize) -> &Mat {
        Self::at(&self.c_seq, self.time_invariant, i)
    }
    pub fn d(&self, i: usize) -> &Mat {
        Self::at(&self.d_seq, self.time_invariant, i)
    }
    pub fn kv(&self, i: usize) -> &Mat {
        Self::at(&self.kv_seq, self.time_invariant, i)
    }
    pub fn r(&self, i: usize) -> &Mat {
        Self::at(&self.r_seq, self.time_invariant, i)
    }
    pub fn q(&self, i: usize) -> &Mat {
        Self::at(&self.q_seq, self.time_invariant, i)
    }

    /// Cost weight on `B_{i-1}` in the finite-horizon problem.
    pub fn cost_q(&self, i: usize) -> &Mat {
        if i == self.horizon {
            &self.terminal_q
        } else {
            self.q(i)
        }
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        validate_model(self)
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch {
        field: &'static str,
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    SequenceLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    NotSymmetric {
        field: &'static str,
        index: usize,
    },
    NotPositiveDefinite {
        field: &'static str,
        index: usize,
        min_eigenvalue: f64,
    },
    NotPositiveSemidefinite {
        field: &'static str,
        index: usize,
        min_eigenvalue: f64,
    },
    NonFinite {
        field: &'static str,
        index: usize,
    },
    NegativeKappa(f64),
    EmptyDimension,
}

fn describe(field: &str) -> &str {
    match field {
        "KV" => "noise covariance",
        "R" => "input cost weight",
        "Q" => "output cost weight",
        "terminal_Q" => "terminal output cost weight",
        "initial_cov" => "initial output covariance",
        other => other,
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch {
                field,
                index,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch: {field}[{index}] is {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::SequenceLength {
                field,
                expected,
                found,
            } => write!(
                f,
                "sequence length: {field} has {found} elements, expected {expected}"
            ),
            Violation::NotSymmetric { field, index } => {
                write!(f, "{} not symmetric at index {index}", describe(field))
            }
            Violation::NotPositiveDefinite {
                field,
                index,
                min_eigenvalue,
            } => write!(
                f,
                "{} not positive definite at index {index} (min eigenvalue {min_eigenvalue:e})",
                describe(field)
            ),
            Violation::NotPositiveSemidefinite {
                field,
                index,
                min_eigenvalue,
            } => write!(
                f,
                "{} not positive semidefinite at index {index} (min eigenvalue {min_eigenvalue:e})",
                describe(field)
            ),
            Violation::NonFinite { field, index } => {
                write!(f, "non-finite entry in {field}[{index}]")
            }
            Violation::NegativeKappa(k) => write!(f, "negative power budget kappa = {k}"),
            Violation::EmptyDimension => write!(f, "output and input dimensions must be positive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("model is not scalar (p = {p}, q = {q})")]
    NotScalar { p: usize, q: usize },
    #[error("model is not time-invariant")]
    NotTimeInvariant,
    #[error("model file: {0}")]
    Schema(String),
}

impl ModelError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ModelError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Clone, Copy)]
enum Definiteness {
    Pd,
    Psd,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn shape(&mut self, field: &'static str, index: usize, m: &Mat, rows: usize, cols: usize) -> bool {
        if m.nrows() != rows || m.ncols() != cols {
            self.violations.push(Violation::DimensionMismatch {
                field,
                index,
                expected: (rows, cols),
                found: (m.nrows(), m.ncols()),
            });
            return false;
        }
        if m.iter().any(|v| !v.is_finite()) {
            self.violations.push(Violation::NonFinite { field, index });
            return false;
        }
        true
    }

    fn definite(&mut self, field: &'static str, index: usize, m: &Mat, kind: Definiteness) {
        if !is_symmetric(m, 1e-10) {
            self.violations.push(Violation::NotSymmetric { field, index });
            return;
        }
        match kind {
            Definiteness::Pd => {
                let lmin = min_eigenvalue(m);
                if lmin <= 0.0 {
                    self.violations.push(Violation::NotPositiveDefinite {
                        field,
                        index,
                        min_eigenvalue: lmin,
                    });
                }
            }
            Definiteness::Psd => {
                if !is_psd(m) {
                    self.violations.push(Violation::NotPositiveSemidefinite {
                        field,
                        index,
                        min_eigenvalue: min_eigenvalue(m),
                    });
                }
            }
        }
    }

    fn sequence(
        &mut self,
        field: &'static str,
        seq: &[Mat],
        expected_len: usize,
        rows: usize,
        cols: usize,
        kind: Option<Definiteness>,
    ) {
        if seq.len() != expected_len {
            self.violations.push(Violation::SequenceLength {
                field,
                expected: expected_len,
                found: seq.len(),
            });
        }
        for (i, m) in seq.iter().enumerate() {
            if self.shape(field, i, m, rows, cols) {
                if let Some(kind) = kind {
                    self.definite(field, i, m, kind);
                }
            }
        }
    }
}

/// Checks every model invariant, returning all violations at once.
pub fn validate_model(model: ChannelModel) -> Result<ChannelModel, ModelError> {
    let mut ck = Checker {
        violations: Vec::new(),
    };
    let (p, q) = (model.output_dim, model.input_dim);
    if p == 0 || q == 0 {
        return Err(ModelError::Invalid(vec![Violation::EmptyDimension]));
    }
    let len = if model.time_invariant {
        1
    } else {
        model.horizon + 1
    };
    ck.sequence("C", &model.c_seq, len, p, p, None);
    ck.sequence("D", &model.d_seq, len, p, q, None);
    ck.sequence("KV", &model.kv_seq, len, p, p, Some(Definiteness::Pd));
    ck.sequence("R", &model.r_seq, len, q, q, Some(Definiteness::Pd));
    ck.sequence("Q", &model.q_seq, len, p, p, Some(Definiteness::Psd));
    if ck.shape("terminal_Q", 0, &model.terminal_q, p, p) {
        ck.definite("terminal_Q", 0, &model.terminal_q, Definiteness::Psd);
    }
    if !(model.kappa.is_finite() && model.kappa >= 0.0) {
        ck.violations.push(Violation::NegativeKappa(model.kappa));
    }
    match &model.initial_output {
        InitialOutput::Fixed(b) => {
            let m = Mat::from_column_slice(b.len(), 1, b.as_slice());
            ck.shape("initial_output", 0, &m, p, 1);
        }
        InitialOutput::Gaussian { mean, cov } => {
            let m = Mat::from_column_slice(mean.len(), 1, mean.as_slice());
            ck.shape("initial_mean", 0, &m, p, 1);
            if ck.shape("initial_cov", 0, cov, p, p) {
                ck.definite("initial_cov", 0, cov, Definiteness::Psd);
            }
        }
    }
    if ck.violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(ck.violations))
    }
}

/// Scalar parameters of a 1×1 time-invariant channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarChannel {
    pub c: f64,
    pub d: f64,
    pub kv: f64,
    pub r: f64,
    pub q: f64,
    pub kappa: f64,
}

pub fn scalar_view(model: &ChannelModel) -> Result<ScalarChannel, ModelError> {
    if model.output_dim != 1 || model.input_dim != 1 {
        return Err(ModelError::NotScalar {
            p: model.output_dim,
            q: model.input_dim,
        });
    }
    if !model.time_invariant {
        return Err(ModelError::NotTimeInvariant);
    }
    Ok(ScalarChannel {
        c: model.c(0)[(0, 0)],
        d: model.d(0)[(0, 0)],
        kv: model.kv(0)[(0, 0)],
        r: model.r(0)[(0, 0)],
        q: model.q(0)[(0, 0)],
        kappa: model.kappa,
    })
}

/// Randomized strategy `A_i = Γ_i B_{i-1} + Z_i`, `Z_i ~ N(0, K_{Z_i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub gains: Vec<Mat>,
    pub innovations: Vec<Mat>,
    /// A stationary strategy holds one pair, applied at every step.
    pub stationary: bool,
}

impl Strategy {
    pub fn stationary(gain: Mat, kz: Mat) -> Self {
        Self {
            gains: vec![gain],
            innovations: vec![kz],
            stationary: true,
        }
    }

    pub fn time_varying(gains: Vec<Mat>, innovations: Vec<Mat>) -> Self {
        Self {
            gains,
            innovations,
            stationary: false,
        }
    }

    pub fn gain(&self, i: usize) -> &Mat {
        if self.stationary {
            &self.gains[0]
        } else {
            &self.gains[i]
        }
    }

    pub fn innovation(&self, i: usize) -> &Mat {
        if self.stationary {
            &self.innovations[0]
        } else {
            &self.innovations[i]
        }
    }

    /// Number of steps the strategy covers, `None` if unbounded.
    pub fn len(&self) -> Option<usize> {
        (!self.stationary).then_some(self.gains.len())
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Checks shapes against the model and PSD-ness of every `K_Z`.
    pub fn check(&self, model: &ChannelModel) -> Result<(), ModelError> {
        let mut ck = Checker {
            violations: Vec::new(),
        };
        let (p, q) = (model.output_dim, model.input_dim);
        let len = if self.stationary {
            1
        } else {
            model.horizon + 1
        };
        ck.sequence("gain", &self.gains, len, q, p, None);
        ck.sequence("KZ", &self.innovations, len, q, q, Some(Definiteness::Psd));
        if ck.violations.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(ck.violations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_reference_model_is_valid() {
        let model = ChannelModel::scalar(0.5, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert!(validate_model(model).is_ok());
    }

    #[test]
    fn zero_noise_is_rejected() {
        let model = ChannelModel::scalar(0.5, 1.0, 0.0, 1.0, 0.0, 1.0);
        let err = validate_model(model).unwrap_err();
        assert!(err.to_string().contains("noise covariance not positive definite"));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut model = ChannelModel::time_invariant(
            Mat::identity(2, 2),
            m(2, 1, &[1.0, 0.0]),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
            Mat::zeros(2, 2),
            1.0,
        );
        model.d_seq = vec![Mat::zeros(3, 1)];
        let err = validate_model(model).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
        assert!(matches!(
            err.violations()[0],
            Violation::DimensionMismatch { field: "D", index: 0, .. }
        ));
    }

    #[test]
    fn every_violation_is_collected() {
        let mut model = ChannelModel::scalar(0.5, 1.0, -1.0, 0.0, -2.0, -1.0);
        model.time_invariant = false;
        model.horizon = 1;
        model.c_seq.push(Mat::zeros(1, 1));
        let err = validate_model(model).unwrap_err();
        let v = err.violations();
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeKappa(_))));
        assert!(v.iter().any(|x| matches!(x, Violation::NotPositiveDefinite { field: "KV", .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NotPositiveDefinite { field: "R", .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NotPositiveSemidefinite { field: "Q", .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::SequenceLength { field: "D", .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let model = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0);
        let once = validate_model(model.clone()).unwrap();
        let twice = validate_model(once.clone()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, model);
    }

    #[test]
    fn scalar_view_projection_and_errors() {
        let s = scalar_view(&ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0)).unwrap();
        assert_eq!((s.c, s.d, s.kv, s.r, s.q, s.kappa), (2.0, 1.0, 1.0, 1.0, 0.0, 9.0));

        let mimo = ChannelModel::time_invariant(
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
            1.0,
        );
        assert!(matches!(scalar_view(&mimo), Err(ModelError::NotScalar { .. })));

        let mut tv = ChannelModel::scalar(0.5, 1.0, 1.0, 1.0, 0.0, 1.0).with_horizon(1);
        tv.time_invariant = false;
        for seq in [&mut tv.c_seq, &mut tv.d_seq, &mut tv.kv_seq, &mut tv.r_seq, &mut tv.q_seq] {
            let first = seq[0].clone();
            seq.push(first);
        }
        assert!(validate_model(tv.clone()).is_ok());
        assert!(matches!(scalar_view(&tv), Err(ModelError::NotTimeInvariant)));
    }

    #[test]
    fn gaussian_initial_output_moments() {
        let init = InitialOutput::Gaussian {
            mean: Vector::from_vec(vec![1.0, 2.0]),
            cov: m(2, 2, &[1.0, 0.0, 0.0, 2.0]),
        };
        let p = m(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        // μᵀPμ + tr(P K) = (2 + 4) + (2 + 2)
        assert!((init.expected_quadratic(&p) - 10.0).abs() < 1e-14);
        assert_eq!(init.second_moment(), m(2, 2, &[2.0, 2.0, 2.0, 6.0]));
    }
}

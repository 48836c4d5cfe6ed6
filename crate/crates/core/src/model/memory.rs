//! Memory-order-J channels and their first-order block lift.
//!
//! A channel `B_i = Σ_{j=1..M} C_j B_{i-j} + D A_i + V_i` with cost on the
//! last `K` outputs is rewritten over the stacked state
//! `S_{i-1} = (B_{i-1}, …, B_{i-J})`, `J = max(M, K)`, as
//! `S_i = C_J S_{i-1} + D_J A_i + E V_i` with a block-companion `C_J`.

use crate::model::{validate_model, ChannelModel, Checker, Definiteness, InitialOutput, ModelError};
use crate::tolerances::EPS_REG;
use crate::{Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryJModel {
    /// `C_1 … C_M`, each `p×p`; `lags[0]` multiplies `B_{i-1}`.
    pub lags: Vec<Mat>,
    pub d: Mat,
    pub kv: Mat,
    pub r: Mat,
    /// Cost memory `K`; `q_k` is `Kp×Kp` acting on `(B_{i-1}, …, B_{i-K})`.
    pub cost_memory: usize,
    pub q_k: Mat,
    pub terminal_q_k: Option<Mat>,
    pub kappa: f64,
    pub horizon: usize,
    /// `(b_{-1}, …, b_{-J})`; missing entries are zero.
    pub initial_outputs: Vec<Vector>,
}

impl MemoryJModel {
    pub fn output_dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn channel_memory(&self) -> usize {
        self.lags.len()
    }

    /// `J = max(M, K)`, at least 1.
    pub fn order(&self) -> usize {
        self.lags.len().max(self.cost_memory).max(1)
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        let mut ck = Checker {
            violations: Vec::new(),
        };
        let (p, q) = (self.output_dim(), self.input_dim());
        if p == 0 || q == 0 || self.lags.is_empty() {
            return Err(ModelError::Invalid(vec![super::Violation::EmptyDimension]));
        }
        for (j, c) in self.lags.iter().enumerate() {
            ck.shape("C_lags", j, c, p, p);
        }
        if ck.shape("KV", 0, &self.kv, p, p) {
            ck.definite("KV", 0, &self.kv, Definiteness::Pd);
        }
        if ck.shape("R", 0, &self.r, q, q) {
            ck.definite("R", 0, &self.r, Definiteness::Pd);
        }
        let kp = self.cost_memory * p;
        if kp > 0 && ck.shape("Q_K", 0, &self.q_k, kp, kp) {
            ck.definite("Q_K", 0, &self.q_k, Definiteness::Psd);
        }
        if let Some(t) = &self.terminal_q_k {
            if kp > 0 && ck.shape("terminal_Q_K", 0, t, kp, kp) {
                ck.definite("terminal_Q_K", 0, t, Definiteness::Psd);
            }
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            ck.violations.push(super::Violation::NegativeKappa(self.kappa));
        }
        if self.initial_outputs.len() > self.order() {
            ck.violations.push(super::Violation::SequenceLength {
                field: "initial_outputs",
                expected: self.order(),
                found: self.initial_outputs.len(),
            });
        }
        for (j, b) in self.initial_outputs.iter().enumerate() {
            let m = Mat::from_column_slice(b.len(), 1, b.as_slice());
            ck.shape("initial_outputs", j, &m, p, 1);
        }
        if ck.violations.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(ck.violations))
        }
    }
}

/// First-order lift of a [`MemoryJModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub model: ChannelModel,
    pub order: usize,
    pub base_output_dim: usize,
    /// Diagonal padding added to the undriven noise blocks, if any.
    pub regularization: Option<f64>,
}

fn embed(p_total: usize, block: &Mat) -> Mat {
    let mut out = Mat::zeros(p_total, p_total);
    if !block.is_empty() {
        out.view_mut((0, 0), (block.nrows(), block.ncols()))
            .copy_from(block);
    }
    out
}

pub fn augment_memory(model: &MemoryJModel) -> Result<AugmentedModel, ModelError> {
    let model = model.clone().validate()?;
    let p = model.output_dim();
    let j = model.order();
    let jp = j * p;

    let mut companion = Mat::zeros(jp, jp);
    for (lag, c) in model.lags.iter().enumerate() {
        companion.view_mut((0, lag * p), (p, p)).copy_from(c);
    }
    for row in 1..j {
        companion
            .view_mut((row * p, (row - 1) * p), (p, p))
            .copy_from(&Mat::identity(p, p));
    }

    let mut d = Mat::zeros(jp, model.input_dim());
    d.view_mut((0, 0), (p, model.input_dim())).copy_from(&model.d);

    let mut kv = embed(jp, &model.kv);
    let regularization = (j > 1).then_some(EPS_REG);
    for i in p..jp {
        kv[(i, i)] = EPS_REG;
    }

    let q = embed(jp, &model.q_k);
    let terminal_q = model
        .terminal_q_k
        .as_ref()
        .map(|t| embed(jp, t))
        .unwrap_or_else(|| q.clone());

    let mut init = Vector::zeros(jp);
    for (lag, b) in model.initial_outputs.iter().enumerate() {
        init.rows_mut(lag * p, p).copy_from(b);
    }

    let lifted = ChannelModel {
        horizon: model.horizon,
        output_dim: jp,
        input_dim: model.input_dim(),
        c_seq: vec![companion],
        d_seq: vec![d],
        kv_seq: vec![kv],
        r_seq: vec![model.r.clone()],
        q_seq: vec![q],
        terminal_q,
        kappa: model.kappa,
        initial_output: InitialOutput::Fixed(init),
        time_invariant: true,
    };
    Ok(AugmentedModel {
        model: validate_model(lifted)?,
        order: j,
        base_output_dim: p,
        regularization,
    })
}

impl AugmentedModel {
    /// Pads a gain acting on the first `cols/p` lags with zeros on the rest.
    pub fn lift_gain(&self, gain: &Mat) -> Mat {
        let mut out = Mat::zeros(gain.nrows(), self.model.output_dim);
        out.view_mut((0, 0), (gain.nrows(), gain.ncols()))
            .copy_from(gain);
        out
    }

    /// Current output `B_i` read from the stacked state.
    pub fn top_block(&self, state: &Vector) -> Vector {
        state.rows(0, self.base_output_dim).into_owned()
    }

    /// One state update `C_J s + D_J a + E v`; only the top block sees noise.
    pub fn step(&self, state: &Vector, a: &Vector, v: &Vector) -> Vector {
        let c = &self.model.c_seq[0];
        let d = &self.model.d_seq[0];
        let n = state.len();
        let mut next = Vector::zeros(n);
        for row in 0..n {
            let mut acc = 0.0;
            for col in 0..n {
                acc += c[(row, col)] * state[col];
            }
            let mut drive = 0.0;
            for k in 0..a.len() {
                drive += d[(row, k)] * a[k];
            }
            acc += drive;
            if row < self.base_output_dim {
                acc += v[row];
            }
            next[row] = acc;
        }
        next
    }

    /// Runs `A_i = Γ S_{i-1} + Z_i` through the lift with supplied draws;
    /// returns `(B_i, A_i)` for each step.
    pub fn propagate(
        &self,
        gain: &Mat,
        innovations: &[Vector],
        noise: &[Vector],
    ) -> (Vec<Vector>, Vec<Vector>, Vec<Vector>) {
        let mut state = match &self.model.initial_output {
            InitialOutput::Fixed(b) => b.clone(),
            InitialOutput::Gaussian { mean, .. } => mean.clone(),
        };
        let mut outputs = Vec::with_capacity(noise.len());
        let mut inputs = Vec::with_capacity(noise.len());
        let mut states = Vec::with_capacity(noise.len() + 1);
        for (z, v) in innovations.iter().zip(noise) {
            let mut a = Vector::zeros(gain.nrows());
            for r in 0..gain.nrows() {
                let mut acc = 0.0;
                for c in 0..gain.ncols() {
                    acc += gain[(r, c)] * state[c];
                }
                a[r] = acc + z[r];
            }
            states.push(state.clone());
            state = self.step(&state, &a, v);
            outputs.push(self.top_block(&state));
            inputs.push(a);
        }
        states.push(state);
        (outputs, inputs, states)
    }

    /// `Σ ⟨A_i, R A_i⟩ + ⟨S_{i-1}, Q_J S_{i-1}⟩` along a propagated path.
    pub fn path_cost(&self, states: &[Vector], inputs: &[Vector]) -> f64 {
        let r = &self.model.r_seq[0];
        let q = &self.model.q_seq[0];
        inputs
            .iter()
            .zip(states)
            .map(|(a, s)| (a.transpose() * r * a)[(0, 0)] + (s.transpose() * q * s)[(0, 0)])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn scalar_memory(lags: &[f64], k: usize, q_k: Mat) -> MemoryJModel {
        MemoryJModel {
            lags: lags.iter().map(|c| s(*c)).collect(),
            d: s(1.0),
            kv: s(1.0),
            r: s(1.0),
            cost_memory: k,
            q_k,
            terminal_q_k: None,
            kappa: 1.0,
            horizon: 4,
            initial_outputs: vec![],
        }
    }

    #[test]
    fn first_order_lift_is_identity() {
        let m = scalar_memory(&[0.5], 1, s(0.3));
        let aug = augment_memory(&m).unwrap();
        assert_eq!(aug.order, 1);
        assert_eq!(aug.regularization, None);
        let expected = ChannelModel::scalar(0.5, 1.0, 1.0, 1.0, 0.3, 1.0).with_horizon(4);
        assert_eq!(aug.model, expected);
    }

    #[test]
    fn second_order_companion() {
        let aug = augment_memory(&scalar_memory(&[0.5, 0.25], 0, Mat::zeros(0, 0))).unwrap();
        assert_eq!(aug.order, 2);
        assert_eq!(aug.model.c_seq[0], Mat::from_row_slice(2, 2, &[0.5, 0.25, 1.0, 0.0]));
        assert_eq!(aug.model.d_seq[0], Mat::from_row_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(aug.model.kv_seq[0][(0, 0)], 1.0);
        assert_eq!(aug.model.kv_seq[0][(1, 1)], EPS_REG);
        assert_eq!(aug.regularization, Some(EPS_REG));
    }

    #[test]
    fn top_row_reproduces_second_order_recursion() {
        // Symbolic check on basis states: top row of C_J s must equal
        // 0.5 b_{i-1} + 0.25 b_{i-2}, the lower row shifts b_{i-1} down.
        let aug = augment_memory(&scalar_memory(&[0.5, 0.25], 0, Mat::zeros(0, 0))).unwrap();
        let zero_a = Vector::zeros(1);
        let zero_v = Vector::zeros(1);
        let e1 = aug.step(&Vector::from_vec(vec![1.0, 0.0]), &zero_a, &zero_v);
        let e2 = aug.step(&Vector::from_vec(vec![0.0, 1.0]), &zero_a, &zero_v);
        assert_eq!(e1.as_slice(), &[0.5, 1.0]);
        assert_eq!(e2.as_slice(), &[0.25, 0.0]);
        let drive = aug.step(&Vector::zeros(2), &Vector::from_vec(vec![1.0]), &Vector::from_vec(vec![1.0]));
        assert_eq!(drive.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn cost_memory_two_fills_the_block() {
        let q_k = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let aug = augment_memory(&scalar_memory(&[0.5], 2, q_k.clone())).unwrap();
        assert_eq!(aug.model.output_dim, 2);
        assert_eq!(aug.model.q_seq[0], q_k);
    }

    #[test]
    fn lifted_cost_matches_direct_cost() {
        // M = 1, K = 2 over a 5-step path, brute force against the
        // original coordinates.
        let q_k = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut base = scalar_memory(&[0.7], 2, q_k.clone());
        base.initial_outputs = vec![Vector::from_vec(vec![0.3]), Vector::from_vec(vec![-0.2])];
        let aug = augment_memory(&base).unwrap();
        let z: Vec<Vector> = [0.1, -0.4, 0.3, 0.9, -1.1].iter().map(|x| Vector::from_vec(vec![*x])).collect();
        let v: Vec<Vector> = [0.5, 0.2, -0.7, 0.05, 0.3].iter().map(|x| Vector::from_vec(vec![*x])).collect();
        let gain = Mat::from_row_slice(1, 1, &[-0.3]);
        let (_, inputs, states) = aug.propagate(&aug.lift_gain(&gain), &z, &v);
        let lifted = aug.path_cost(&states, &inputs);

        let (mut b1, mut b2) = (0.3_f64, -0.2_f64);
        let mut direct = 0.0;
        for i in 0..5 {
            let a = -0.3 * b1 + z[i][0];
            direct += a * a + 2.0 * b1 * b1 + 2.0 * 0.5 * b1 * b2 + b2 * b2;
            let b = 0.7 * b1 + a + v[i][0];
            b2 = b1;
            b1 = b;
        }
        assert!((lifted - direct).abs() < 1e-12, "{lifted} vs {direct}");
    }

    #[test]
    fn invalid_memory_model() {
        let mut m = scalar_memory(&[0.5], 0, Mat::zeros(0, 0));
        m.lags.clear();
        assert!(augment_memory(&m).is_err());
        let mut m = scalar_memory(&[0.5], 1, s(-1.0));
        assert!(augment_memory(&m).is_err());
        m.q_k = s(1.0);
        m.kv = s(0.0);
        assert!(augment_memory(&m).is_err());
    }
}

//! Monte Carlo of the closed loop and the directed-information density.
//!
//! A trace runs `A_i = Γ_i B_{i-1} + Z_i`, `B_i = C_i B_{i-1} + D_i A_i + V_i`.
//! Innovations are realized from uniforms through the normal quantile and
//! the symmetric square root of `K_Z`; noise uses its Cholesky factor. Each
//! trace draws from three ChaCha20 streams of its seed: innovations, noise
//! and the initial output.

mod normal;
mod report;

pub use normal::{standard_normal_cdf, standard_normal_quantile, StreamRng};
pub use report::{stability_report, write_trace_csv, DeviationHistogram, HorizonCheck, StabilityReport};

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{cholesky, logdet_pd, sym_sqrt, symmetrize};
use crate::model::{ChannelModel, InitialOutput, ModelError, Strategy};
use crate::{Mat, Vector};

const STREAM_INNOVATION: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_INITIAL: u64 = 2;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("uniform coordinate {0} is not strictly inside (0, 1)")]
    UniformOutOfRange(f64),
    #[error("covariance factorization failed for {0}")]
    Factorization(&'static str),
    #[error("simulation needs at least one step")]
    NoSteps,
    #[error("strategy covers {available} steps, {requested} requested")]
    StrategyTooShort { available: usize, requested: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `Z = K_Z^{1/2} (Φ⁻¹(u_1), …, Φ⁻¹(u_q))ᵀ`.
pub fn innovation_from_uniform(u: &[f64], kz: &Mat) -> Result<Vector, SimulateError> {
    if u.len() != kz.nrows() || !kz.is_square() {
        return Err(SimulateError::DimensionMismatch(format!(
            "{} uniforms for a {}x{} covariance",
            u.len(),
            kz.nrows(),
            kz.ncols()
        )));
    }
    Ok(sym_sqrt(kz) * standard_normals(u)?)
}

fn standard_normals(u: &[f64]) -> Result<Vector, SimulateError> {
    let mut z = Vector::zeros(u.len());
    for (zi, &ui) in z.iter_mut().zip(u) {
        *zi = standard_normal_quantile(ui).ok_or(SimulateError::UniformOutOfRange(ui))?;
    }
    Ok(z)
}

/// Both conditional laws of `B_i` at one step.
///
/// Under the channel, `B_i | b₋, a ~ N(Cb₋ + Da, K_V)`; under the strategy,
/// `B_i | b₋ ~ N(Cb₋ + DΓb₋, DK_ZDᵀ + K_V)`.
#[derive(Debug, Clone)]
pub struct StepLaw {
    pub c: Mat,
    pub d: Mat,
    pub gain: Mat,
    kv_chol: Mat,
    kv_logdet: f64,
    out_chol: Mat,
    out_logdet: f64,
    kz_sqrt: Mat,
}

impl StepLaw {
    pub fn new(c: &Mat, d: &Mat, kv: &Mat, gain: &Mat, kz: &Mat) -> Result<Self, SimulateError> {
        let p = c.nrows();
        let q = d.ncols();
        if c.shape() != (p, p) || d.nrows() != p || kv.shape() != (p, p) || gain.shape() != (q, p) || kz.shape() != (q, q) {
            return Err(SimulateError::DimensionMismatch(format!(
                "C {:?}, D {:?}, K_V {:?}, gain {:?}, K_Z {:?}",
                c.shape(),
                d.shape(),
                kv.shape(),
                gain.shape(),
                kz.shape()
            )));
        }
        let out = symmetrize(&(d * kz * d.transpose() + kv));
        let kv = symmetrize(kv);
        let factor = |m: &Mat, what| {
            let l = cholesky(m).ok_or(SimulateError::Factorization(what))?.l();
            let ld = logdet_pd(m).ok_or(SimulateError::Factorization(what))?;
            Ok::<_, SimulateError>((l, ld))
        };
        let (kv_chol, kv_logdet) = factor(&kv, "K_V")?;
        let (out_chol, out_logdet) = factor(&out, "D K_Z Dᵀ + K_V")?;
        if crate::linalg::min_eigenvalue(kz) < -crate::tolerances::TOL_PSD * kz.amax() {
            return Err(SimulateError::Factorization("K_Z"));
        }
        Ok(Self {
            c: c.clone(),
            d: d.clone(),
            gain: gain.clone(),
            kv_chol,
            kv_logdet,
            out_chol,
            out_logdet,
            kz_sqrt: sym_sqrt(kz),
        })
    }
}

/// `⟨x, (LLᵀ)⁻¹x⟩` from a lower Cholesky factor.
fn mahalanobis(l: &Mat, x: &Vector) -> f64 {
    let y = l
        .solve_lower_triangular(x)
        .expect("Cholesky factor has a positive diagonal");
    y.dot(&y)
}

/// `log N(b; Cb₋+Da, K_V) − log N(b; Cb₋+DΓb₋, DK_ZDᵀ+K_V)`, in nats.
pub fn info_density_step(b_prev: &Vector, a: &Vector, b: &Vector, law: &StepLaw) -> f64 {
    let cb = &law.c * b_prev;
    let channel_mean = &cb + &law.d * a;
    let strategy_mean = &cb + &law.d * (&law.gain * b_prev);
    let channel = mahalanobis(&law.kv_chol, &(b - channel_mean)) + law.kv_logdet;
    let strategy = mahalanobis(&law.out_chol, &(b - strategy_mean)) + law.out_logdet;
    0.5 * (strategy - channel)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub steps: usize,
    pub initial: Vector,
    /// `B_0 … B_{steps-1}`.
    pub b_path: Vec<Vector>,
    pub a_path: Vec<Vector>,
    pub info_density_path: Vec<f64>,
    /// `⟨A_i, R_i A_i⟩ + ⟨B_{i-1}, Q_i B_{i-1}⟩`.
    pub cost_path: Vec<f64>,
    /// `running_rate[k]` is the mean of `info_density_path[..=k]`.
    pub running_rate: Vec<f64>,
    pub running_cost: Vec<f64>,
}

impl SimulationTrace {
    pub fn terminal_rate(&self) -> f64 {
        self.running_rate.last().copied().unwrap_or(0.0)
    }

    pub fn terminal_cost(&self) -> f64 {
        self.running_cost.last().copied().unwrap_or(0.0)
    }
}

fn running_mean(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .enumerate()
        .map(|(k, x)| {
            acc += x;
            acc / (k + 1) as f64
        })
        .collect()
}

/// Per-step laws and factors, shared by every trace of a batch.
struct Plan {
    laws: Vec<StepLaw>,
    kv_chol: Vec<Mat>,
    r: Vec<Mat>,
    q: Vec<Mat>,
    /// One table entry serves every step.
    shared: bool,
}

fn plan(model: &ChannelModel, strategy: &Strategy, steps: usize) -> Result<Plan, SimulateError> {
    if steps == 0 {
        return Err(SimulateError::NoSteps);
    }
    if let Some(available) = strategy.len() {
        if steps > available {
            return Err(SimulateError::StrategyTooShort {
                available,
                requested: steps,
            });
        }
    }
    if !model.time_invariant && steps > model.horizon + 1 {
        return Err(SimulateError::StrategyTooShort {
            available: model.horizon + 1,
            requested: steps,
        });
    }
    let shared = model.time_invariant && strategy.stationary;
    let len = if shared { 1 } else { steps };
    let mut laws = Vec::with_capacity(len);
    let mut kv_chol = Vec::with_capacity(len);
    let mut r = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    for i in 0..len {
        laws.push(StepLaw::new(model.c(i), model.d(i), model.kv(i), strategy.gain(i), strategy.innovation(i))?);
        kv_chol.push(laws[i].kv_chol.clone());
        r.push(model.r(i).clone());
        // Stationary strategies carry the running cost; finite ones end on the terminal weight.
        q.push(if strategy.stationary {
            model.q(i).clone()
        } else {
            model.cost_q(i).clone()
        });
    }
    Ok(Plan {
        laws,
        kv_chol,
        r,
        q,
        shared,
    })
}

fn draw_initial(initial: &InitialOutput, seed: u64) -> Result<Vector, SimulateError> {
    match initial {
        InitialOutput::Fixed(b) => Ok(b.clone()),
        InitialOutput::Gaussian { mean, cov } => {
            let mut rng = StreamRng::new(seed, STREAM_INITIAL);
            let mut u = vec![0.0; mean.len()];
            rng.fill_open_uniform(&mut u);
            Ok(mean + sym_sqrt(cov) * standard_normals(&u)?)
        }
    }
}

fn run(plan: &Plan, model: &ChannelModel, steps: usize, seed: u64) -> Result<SimulationTrace, SimulateError> {
    let (p, q) = (model.output_dim, model.input_dim);
    let mut z_rng = StreamRng::new(seed, STREAM_INNOVATION);
    let mut v_rng = StreamRng::new(seed, STREAM_NOISE);
    let mut uz = vec![0.0; q];
    let mut uv = vec![0.0; p];
    let initial = draw_initial(&model.initial_output, seed)?;
    let mut b_prev = initial.clone();
    let mut b_path = Vec::with_capacity(steps);
    let mut a_path = Vec::with_capacity(steps);
    let mut info = Vec::with_capacity(steps);
    let mut cost = Vec::with_capacity(steps);
    for i in 0..steps {
        let k = if plan.shared { 0 } else { i };
        let law = &plan.laws[k];
        z_rng.fill_open_uniform(&mut uz);
        v_rng.fill_open_uniform(&mut uv);
        let z = &law.kz_sqrt * standard_normals(&uz)?;
        let v = &plan.kv_chol[k] * standard_normals(&uv)?;
        let a = &law.gain * &b_prev + z;
        let b = &law.c * &b_prev + &law.d * &a + v;
        info.push(info_density_step(&b_prev, &a, &b, law));
        cost.push(a.dot(&(&plan.r[k] * &a)) + b_prev.dot(&(&plan.q[k] * &b_prev)));
        a_path.push(a);
        b_prev = b.clone();
        b_path.push(b);
    }
    Ok(SimulationTrace {
        seed,
        steps,
        initial,
        b_path,
        a_path,
        running_rate: running_mean(&info),
        running_cost: running_mean(&cost),
        info_density_path: info,
        cost_path: cost,
    })
}

/// One trace; bit-identical for identical inputs.
pub fn sample_trajectory(
    model: &ChannelModel,
    strategy: &Strategy,
    steps: usize,
    seed: u64,
) -> Result<SimulationTrace, SimulateError> {
    let plan = plan(model, strategy, steps)?;
    run(&plan, model, steps, seed)
}

/// Independent traces for each seed, generated in parallel.
pub fn simulate_batch(
    model: &ChannelModel,
    strategy: &Strategy,
    steps: usize,
    seeds: &[u64],
) -> Result<Vec<SimulationTrace>, SimulateError> {
    let plan = plan(model, strategy, steps)?;
    seeds.par_iter().map(|&seed| run(&plan, model, steps, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn innovation_examples() {
        let kz = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_eq!(innovation_from_uniform(&[0.5, 0.5], &kz).unwrap(), Vector::zeros(2));
        for u in [0.01, 0.3, 0.99] {
            assert_eq!(innovation_from_uniform(&[u, 1.0 - u], &Mat::zeros(2, 2)).unwrap(), Vector::zeros(2));
        }
        let z = innovation_from_uniform(&[standard_normal_cdf(1.0)], &s1(4.0)).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-6);
        assert!(matches!(
            innovation_from_uniform(&[1.0], &s1(4.0)),
            Err(SimulateError::UniformOutOfRange(_))
        ));
    }

    #[test]
    fn info_density_examples() {
        let law = StepLaw::new(&s1(2.0), &s1(1.0), &s1(1.0), &s1(-1.5), &s1(0.0)).unwrap();
        let b_prev = Vector::from_vec(vec![0.7]);
        let a = &law.gain * &b_prev;
        for b in [-3.0, 0.1, 4.0] {
            assert_eq!(info_density_step(&b_prev, &a, &Vector::from_vec(vec![b]), &law), 0.0);
        }
        // Both exponents vanish at the common conditional mean.
        let law = StepLaw::new(&s1(2.0), &s1(1.0), &s1(1.0), &s1(-1.5), &s1(1.5)).unwrap();
        let a = &law.gain * &b_prev;
        let b = &law.c * &b_prev + &law.d * &a;
        let i = info_density_step(&b_prev, &a, &b, &law);
        assert!((i - 0.5 * 2.5_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_trace() {
        let model = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0);
        let strategy = Strategy::stationary(s1(-1.5), s1(1.5));
        let a = sample_trajectory(&model, &strategy, 500, 11).unwrap();
        let b = sample_trajectory(&model, &strategy, 500, 11).unwrap();
        let c = sample_trajectory(&model, &strategy, 500, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.b_path, c.b_path);
        let batch = simulate_batch(&model, &strategy, 500, &[11, 12]).unwrap();
        assert_eq!(batch[0], a);
        assert_eq!(batch[1], c);
    }

    #[test]
    fn pure_noise_covariance() {
        let model = ChannelModel::scalar(0.0, 1.0, 1.7, 1.0, 0.0, 1.0);
        let strategy = Strategy::stationary(s1(0.0), s1(0.0));
        let n = 100_000;
        let t = sample_trajectory(&model, &strategy, n, 3).unwrap();
        let var = t.b_path.iter().map(|b| b[0] * b[0]).sum::<f64>() / n as f64;
        // Var of the sample second moment is 2σ⁴/n.
        let se = (2.0_f64).sqrt() * 1.7 / (n as f64).sqrt();
        assert!((var - 1.7).abs() < 3.0 * se, "{var}");
        assert!(t.info_density_path.iter().all(|i| *i == 0.0));
    }

    #[test]
    fn stable_closed_loop_variance() {
        // C + DΓ = 0.5 and DK_ZDᵀ + K_V = 2.5 give K = 10/3.
        let model = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0);
        let strategy = Strategy::stationary(s1(-1.5), s1(1.5));
        let n = 100_000;
        let t = sample_trajectory(&model, &strategy, n, 5).unwrap();
        let burn = 100;
        let xs: Vec<f64> = t.b_path[burn..].iter().map(|b| b[0]).collect();
        let m = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / m;
        // AR(1) with ρ = 0.5: the squared process has autocorrelation ρ^{2k}.
        let k = 10.0 / 3.0;
        let se = (2.0 * k * k * (1.0 + 0.25) / (1.0 - 0.25) / m).sqrt();
        assert!((var - k).abs() < 3.0 * se, "{var} vs {k} (se {se})");
    }

    #[test]
    fn open_loop_unstable_channel_diverges() {
        let model = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0);
        let strategy = Strategy::stationary(s1(0.0), s1(1.0));
        for seed in 0..5 {
            let t = sample_trajectory(&model, &strategy, 1001, seed).unwrap();
            assert!(t.b_path[1000][0].abs() > 1e6);
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let model = ChannelModel::scalar(0.5, 1.0, 1.0, 1.0, 0.0, 1.0);
        let st = Strategy::stationary(s1(0.0), s1(1.0));
        assert!(matches!(sample_trajectory(&model, &st, 0, 1), Err(SimulateError::NoSteps)));
        let tv = Strategy::time_varying(vec![s1(0.0); 3], vec![s1(1.0); 3]);
        assert!(matches!(
            sample_trajectory(&model, &tv, 4, 1),
            Err(SimulateError::StrategyTooShort { .. })
        ));
        let bad = Strategy::stationary(s1(0.0), s1(-1.0));
        assert!(matches!(sample_trajectory(&model, &bad, 4, 1), Err(SimulateError::Factorization(_))));
    }
}

//! JSON model files.
//!
//! Matrices are row-major nested arrays. A first-order model:
//!
//! ```json
//! {
//!   "horizon": 0,
//!   "kappa": 9.0,
//!   "C": [[2.0]], "D": [[1.0]], "KV": [[1.0]], "R": [[1.0]], "Q": [[0.0]],
//!   "terminal_Q": [[0.0]],
//!   "initial_output": {"fixed": [0.0]}
//! }
//! ```
//!
//! `Q`, `terminal_Q` (defaults to `Q`, or the last element of a `Q`
//! sequence), `horizon` (0) and `initial_output` (zero) are optional. Any
//! of `C`, `D`, `KV`, `R`, `Q` may instead be a list of `horizon + 1`
//! matrices, which makes the model time-varying; single matrices are then
//! broadcast. `initial_output` is either `{"fixed": [...]}` or
//! `{"gaussian": {"mean": [...], "cov": [[...]]}}`.
//!
//! A memory-order-J model is recognised by the `C_lags` key:
//!
//! ```json
//! {
//!   "kappa": 1.0, "horizon": 10,
//!   "C_lags": [[[0.5]], [[0.25]]],
//!   "D": [[1.0]], "KV": [[1.0]], "R": [[1.0]],
//!   "cost_memory": 1, "Q_K": [[0.0]],
//!   "initial_outputs": [[0.0], [0.0]]
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::model::{ChannelModel, InitialOutput, MemoryJModel, ModelError};
use crate::{Mat, Vector};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Single(Rows),
    Sequence(Vec<Rows>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDoc {
    Fixed(Vec<f64>),
    Gaussian { mean: Vec<f64>, cov: Rows },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderDoc {
    #[serde(default)]
    pub horizon: usize,
    pub kappa: f64,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    #[serde(rename = "D")]
    pub d: MatrixSpec,
    #[serde(rename = "KV")]
    pub kv: MatrixSpec,
    #[serde(rename = "R")]
    pub r: MatrixSpec,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixSpec>,
    #[serde(rename = "terminal_Q", default, skip_serializing_if = "Option::is_none")]
    pub terminal_q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_output: Option<InitialDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryDoc {
    #[serde(default)]
    pub horizon: usize,
    pub kappa: f64,
    #[serde(rename = "C_lags")]
    pub c_lags: Vec<Rows>,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(rename = "KV")]
    pub kv: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(default)]
    pub cost_memory: usize,
    #[serde(rename = "Q_K", default, skip_serializing_if = "Option::is_none")]
    pub q_k: Option<Rows>,
    #[serde(rename = "terminal_Q_K", default, skip_serializing_if = "Option::is_none")]
    pub terminal_q_k: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_outputs: Option<Vec<Vec<f64>>>,
}

/// A parsed model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelDocument {
    FirstOrder(ChannelModel),
    MemoryJ(MemoryJModel),
}

fn schema_err(msg: impl Into<String>) -> ModelError {
    ModelError::Schema(msg.into())
}

pub fn rows_to_mat(rows: &Rows) -> Result<Mat, ModelError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(schema_err("ragged matrix rows"));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn spec_to_seq(spec: &MatrixSpec) -> Result<Vec<Mat>, ModelError> {
    match spec {
        MatrixSpec::Single(rows) => Ok(vec![rows_to_mat(rows)?]),
        MatrixSpec::Sequence(seq) => seq.iter().map(rows_to_mat).collect(),
    }
}

impl FirstOrderDoc {
    pub fn into_model(self) -> Result<ChannelModel, ModelError> {
        let q_spec = self.q.clone();
        let varying = [&self.c, &self.d, &self.kv, &self.r]
            .into_iter()
            .chain(q_spec.as_ref())
            .any(|s| matches!(s, MatrixSpec::Sequence(_)));
        let c = spec_to_seq(&self.c)?;
        let p = c[0].nrows();
        let d = spec_to_seq(&self.d)?;
        let kv = spec_to_seq(&self.kv)?;
        let r = spec_to_seq(&self.r)?;
        let q = match &q_spec {
            Some(spec) => spec_to_seq(spec)?,
            None => vec![Mat::zeros(p, p)],
        };
        let terminal_q = match &self.terminal_q {
            Some(rows) => rows_to_mat(rows)?,
            None => q.last().cloned().unwrap_or_else(|| Mat::zeros(p, p)),
        };
        let n = self.horizon + 1;
        let broadcast = |seq: Vec<Mat>| -> Vec<Mat> {
            if varying && seq.len() == 1 {
                vec![seq[0].clone(); n]
            } else {
                seq
            }
        };
        let initial_output = match self.initial_output {
            None => InitialOutput::zeros(p),
            Some(InitialDoc::Fixed(b)) => InitialOutput::Fixed(Vector::from_vec(b)),
            Some(InitialDoc::Gaussian { mean, cov }) => InitialOutput::Gaussian {
                mean: Vector::from_vec(mean),
                cov: rows_to_mat(&cov)?,
            },
        };
        Ok(ChannelModel {
            horizon: self.horizon,
            output_dim: p,
            input_dim: d[0].ncols(),
            c_seq: broadcast(c),
            d_seq: broadcast(d),
            kv_seq: broadcast(kv),
            r_seq: broadcast(r),
            q_seq: broadcast(q),
            terminal_q,
            kappa: self.kappa,
            initial_output,
            time_invariant: !varying,
        })
    }

    pub fn from_model(model: &ChannelModel) -> Self {
        let spec = |seq: &[Mat]| {
            if model.time_invariant {
                MatrixSpec::Single(mat_to_rows(&seq[0]))
            } else {
                MatrixSpec::Sequence(seq.iter().map(mat_to_rows).collect())
            }
        };
        let initial_output = Some(match &model.initial_output {
            InitialOutput::Fixed(b) => InitialDoc::Fixed(b.iter().copied().collect()),
            InitialOutput::Gaussian { mean, cov } => InitialDoc::Gaussian {
                mean: mean.iter().copied().collect(),
                cov: mat_to_rows(cov),
            },
        });
        Self {
            horizon: model.horizon,
            kappa: model.kappa,
            c: spec(&model.c_seq),
            d: spec(&model.d_seq),
            kv: spec(&model.kv_seq),
            r: spec(&model.r_seq),
            q: Some(spec(&model.q_seq)),
            terminal_q: Some(mat_to_rows(&model.terminal_q)),
            initial_output,
        }
    }
}

impl MemoryDoc {
    pub fn into_model(self) -> Result<MemoryJModel, ModelError> {
        let lags = self
            .c_lags
            .iter()
            .map(rows_to_mat)
            .collect::<Result<Vec<_>, _>>()?;
        let q_k = match &self.q_k {
            Some(rows) => rows_to_mat(rows)?,
            None => {
                let kp = self.cost_memory * self.d.len();
                Mat::zeros(kp, kp)
            }
        };
        Ok(MemoryJModel {
            lags,
            d: rows_to_mat(&self.d)?,
            kv: rows_to_mat(&self.kv)?,
            r: rows_to_mat(&self.r)?,
            cost_memory: self.cost_memory,
            q_k,
            terminal_q_k: self.terminal_q_k.as_ref().map(rows_to_mat).transpose()?,
            kappa: self.kappa,
            horizon: self.horizon,
            initial_outputs: self
                .initial_outputs
                .unwrap_or_default()
                .into_iter()
                .map(Vector::from_vec)
                .collect(),
        })
    }
}

/// Parses a model file; unknown keys are rejected.
pub fn parse_model_json(text: &str) -> Result<ModelDocument, ModelError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| schema_err(format!("malformed JSON: {e}")))?;
    let is_memory = value
        .as_object()
        .ok_or_else(|| schema_err("model must be a JSON object"))?
        .contains_key("C_lags");
    if is_memory {
        let doc: MemoryDoc = serde_json::from_value(value).map_err(|e| schema_err(e.to_string()))?;
        Ok(ModelDocument::MemoryJ(doc.into_model()?))
    } else {
        let doc: FirstOrderDoc =
            serde_json::from_value(value).map_err(|e| schema_err(e.to_string()))?;
        Ok(ModelDocument::FirstOrder(doc.into_model()?))
    }
}

pub fn model_to_json(model: &ChannelModel) -> String {
    serde_json::to_string_pretty(&FirstOrderDoc::from_model(model)).expect("model serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_file_parses() {
        let text = r#"{"kappa": 9, "C": [[2]], "D": [[1]], "KV": [[1]], "R": [[1]], "Q": [[0]]}"#;
        let ModelDocument::FirstOrder(m) = parse_model_json(text).unwrap() else {
            panic!("expected first-order model");
        };
        assert!(m.time_invariant);
        assert_eq!(m, ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.0, 9.0));
    }

    #[test]
    fn sequences_make_model_time_varying() {
        let text = r#"{"kappa": 1, "horizon": 1, "C": [[[0.5]], [[0.6]]], "D": [[1]], "KV": [[1]], "R": [[1]]}"#;
        let ModelDocument::FirstOrder(m) = parse_model_json(text).unwrap() else {
            panic!("expected first-order model");
        };
        assert!(!m.time_invariant);
        assert_eq!(m.d_seq.len(), 2);
        assert_eq!(m.c(1)[(0, 0)], 0.6);
        assert!(crate::validate_model(m).is_ok());
    }

    #[test]
    fn unknown_keys_and_bad_json_are_errors() {
        let text = r#"{"kappa": 1, "C": [[0.5]], "D": [[1]], "KV": [[1]], "R": [[1]], "bogus": 1}"#;
        assert!(matches!(parse_model_json(text), Err(ModelError::Schema(_))));
        assert!(matches!(parse_model_json("{"), Err(ModelError::Schema(_))));
        let ragged = r#"{"kappa": 1, "C": [[0.5, 1], [1]], "D": [[1]], "KV": [[1]], "R": [[1]]}"#;
        assert!(matches!(parse_model_json(ragged), Err(ModelError::Schema(_))));
    }

    #[test]
    fn memory_file_parses() {
        let text = r#"{"kappa": 1, "horizon": 3, "C_lags": [[[0.5]], [[0.25]]], "D": [[1]], "KV": [[1]], "R": [[1]]}"#;
        let ModelDocument::MemoryJ(m) = parse_model_json(text).unwrap() else {
            panic!("expected memory model");
        };
        assert_eq!(m.order(), 2);
        assert_eq!(m.q_k.nrows(), 0);
    }

    #[test]
    fn json_round_trip() {
        let m = ChannelModel::scalar(2.0, 1.0, 1.0, 1.0, 0.5, 9.0)
            .with_horizon(3)
            .with_terminal_q(Mat::from_element(1, 1, 3.0));
        let ModelDocument::FirstOrder(back) = parse_model_json(&model_to_json(&m)).unwrap() else {
            panic!("expected first-order model");
        };
        assert_eq!(back, m);
    }
}

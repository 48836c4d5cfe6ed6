//! Closed forms for the scalar channel with `R = 1`, `Q = 0`.

use serde::Serialize;

use super::{CapacityError, Regime};
use crate::tolerances::TOL_SPEC;

/// Attached to reports on unstable scalar channels.
pub const LOWER_BOUND_NOTE: &str = "The lower bound C(kappa) >= ln|C| is not valid on all of \
[kappa_min, inf): at kappa = kappa_min the closed form gives K_Z* = 0 and capacity 0, and \
1/2 ln((D^2 kappa + K_V)/(C^2 K_V)) reaches ln|C| only for kappa >= (C^4 - 1) K_V / D^2. \
The bound is asserted on that region only.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarCapacity {
    pub capacity_nats: f64,
    pub gain: f64,
    pub kz: f64,
    pub regime: Regime,
    pub kappa_min: f64,
    /// `½D²/(D²κ+K_V)`; `None` below `κ_min`.
    pub s_star: Option<f64>,
}

/// `(C²−1)K_V/D²` for `|C| > 1`, zero otherwise.
pub fn scalar_kappa_min(c: f64, d: f64, kv: f64) -> f64 {
    if c.abs() > 1.0 {
        (c * c - 1.0) * kv / (d * d)
    } else {
        0.0
    }
}

/// Smallest budget at which `½ln((D²κ+K_V)/(C²K_V)) ≥ ln|C|`.
pub fn log_c_bound_threshold(c: f64, d: f64, kv: f64) -> f64 {
    (c.powi(4) - 1.0) * kv / (d * d)
}

pub fn scalar_feedback_capacity(c: f64, d: f64, kv: f64, kappa: f64) -> Result<ScalarCapacity, CapacityError> {
    if d == 0.0 || !d.is_finite() {
        return Err(CapacityError::InvalidScalar("D must be nonzero".into()));
    }
    if kv.is_nan() || kv <= 0.0 {
        return Err(CapacityError::InvalidScalar("K_V must be positive".into()));
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(CapacityError::InvalidScalar("kappa must be nonnegative".into()));
    }
    if (c.abs() - 1.0).abs() <= TOL_SPEC {
        return Err(CapacityError::BoundaryIndeterminate(c));
    }
    let s_star = 0.5 * d * d / (d * d * kappa + kv);
    if c.abs() < 1.0 {
        let capacity_nats = 0.5 * ((d * d * kappa + kv) / kv).ln();
        return Ok(ScalarCapacity {
            capacity_nats,
            gain: 0.0,
            kz: kappa,
            regime: if kappa == 0.0 {
                Regime::ZeroRate
            } else {
                Regime::StableNoFeedback
            },
            kappa_min: 0.0,
            s_star: Some(s_star),
        });
    }
    let gain = -(c * c - 1.0) / (c * d);
    let kappa_min = scalar_kappa_min(c, d, kv);
    if kappa < kappa_min {
        return Ok(ScalarCapacity {
            capacity_nats: 0.0,
            gain,
            kz: 0.0,
            regime: Regime::ZeroRate,
            kappa_min,
            s_star: None,
        });
    }
    let kz = (d * d * kappa + kv * (1.0 - c * c)) / (c * c * d * d);
    let capacity_nats = 0.5 * ((d * d * kz + kv) / kv).ln();
    Ok(ScalarCapacity {
        capacity_nats,
        gain,
        kz,
        regime: if kz == 0.0 {
            Regime::ZeroRate
        } else {
            Regime::UnstableStabilized
        },
        kappa_min,
        s_star: Some(s_star),
    })
}

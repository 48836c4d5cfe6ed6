//! Feedback capacity of Gaussian linear channel models with memory.
//!
//! The channel `B_i = C B_{i-1} + D A_i + V_i` is driven by a randomized
//! strategy `A_i = Γ B_{i-1} + Z_i`. The deterministic gain `Γ` is an LQG
//! control law computed from a Riccati recursion; the innovations covariance
//! `K_Z` is found by a water-filling problem over the PSD cone; the Lagrange
//! multiplier `s` of the power constraint is matched to the budget `κ`.
//!
//! Modules, bottom-up:
//!
//! - [`model`]: channel/cost models, validation, memory-order-J lifting.
//! - [`stability`]: spectra, controllability/stabilizability tests, Lyapunov equations.
//! - [`riccati`]: backward Riccati step, optimal gain, algebraic Riccati solver.
//! - [`waterfill`]: concave log-det maximization over the innovations covariance.
//! - [`capacity`]: finite-horizon and infinite-horizon feedback capacity.
//! - [`simulate`]: Monte Carlo of the closed loop and directed-information density.
//!
//! All rates are in nats.

pub mod capacity;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod simulate;
pub mod stability;
pub mod tolerances;
pub mod waterfill;

pub use capacity::{
    feedback_capacity, finite_horizon_dp, ftfi_capacity, kappa_min, nofeedback_capacity_q0,
    scalar_feedback_capacity, stationary_solve, CapacityError, FeedbackCapacity,
    FiniteHorizonSolution, FtfiCapacity, Regime, ScalarCapacity, StationarySolution,
};
pub use model::{
    augment_memory, scalar_view, validate_model, AugmentedModel, ChannelModel, InitialOutput,
    MemoryJModel, ModelError, ScalarChannel, Strategy,
};
pub use tolerances::Tolerances;

/// Dense real matrix used throughout.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;

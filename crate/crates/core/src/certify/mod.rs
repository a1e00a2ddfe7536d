//! Optimal models, hedges, simulation and pathwise super-replication checks.

mod hedge;
mod model;
mod simulate;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpcore::LpError;

pub use hedge::{linear_interp, linear_interp_extended, mixed_interp, tail_calls, tail_hedge_ratio, HedgeStrategy, InterpolationMode, TailRow};
pub use model::{seed_model, ModelReport, RegimeModel};
pub use simulate::{mc_price, path_rng, simulate, McEstimate};
pub use verify::{exercise_value, gains, verify_superreplication, VerificationMode, VerificationReport, VerifySpec, MAX_LATTICE_PATHS};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("model violates its constraints: {0}")]
    InconsistentModel(String),
    #[error("no martingale transport from maturity {0} to the next")]
    NoTransport(usize),
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("{0}")]
    Invalid(String),
    #[error("malformed hedge: {0}")]
    Shape(String),
    #[error("price {price} is outside the {mode:?} domain of the hedge")]
    ModeMismatch { mode: InterpolationMode, price: f64 },
    #[error("a {hedge:?} hedge cannot be checked in {mode:?} mode")]
    Unsupported { hedge: InterpolationMode, mode: VerificationMode },
    #[error("lattice has {0} paths, too many to enumerate")]
    TooLarge(u128),
}

/// When the option is exercised: at a maturity (0-based), or at `time`
/// between maturities with the underlying at `price`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exercise {
    Maturity(usize),
    Continuous { time: f64, price: f64 },
}

/// Underlying prices at the maturities, with the exercise decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub values: Vec<f64>,
    pub exercise: Exercise,
}

//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A structured-text document violated the coefficient/forcing schema.
    #[error("schema violation: {0}")]
    Schema(String),

    /// A domain invariant failed at construction time.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A positivity-constrained coefficient dips to a non-positive value.
    #[error("coefficient '{name}' must stay positive, found minimum {min}")]
    NonPositiveCoefficient { name: String, min: f64 },

    /// Vector length does not match the basis mode count.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A non-finite value appeared while assembling the ODE right-hand side.
    #[error("non-finite value in the right-hand side at t = {t} (solution blow-up)")]
    NonFinite { t: f64 },

    /// The integrator exceeded its step budget.
    #[error("max_steps = {max_steps} exceeded at t = {t} of horizon {horizon}")]
    MaxStepsExceeded { t: f64, horizon: f64, max_steps: usize },

    /// The error controller drove the step size to zero.
    #[error("step size collapsed to {dt} at t = {t}")]
    StepSizeCollapse { t: f64, dt: f64 },

    /// A time outside the trajectory's span was requested.
    #[error("time {t} outside the trajectory span [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    /// The finite-difference oracle detected a CFL violation.
    #[error("CFL violation in the finite-difference oracle at t = {t}: Courant number {courant:.3} > 1")]
    CflViolation { t: f64, courant: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

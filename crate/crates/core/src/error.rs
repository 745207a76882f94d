use thiserror::Error;

/// Errors raised by the simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("mapping cooperativity diverges at focusing = 1")]
    DivergentCooperativity,
    #[error("cavity decay rate kappa must be positive")]
    MissingCavity,
    #[error("drive below threshold (eps_d = {eps_d} < g/2 = {half_g})")]
    BelowThreshold { eps_d: f64, half_g: f64 },
    #[error("Fock truncation inadequate: top-two-level population {population:.3e} exceeds {tolerance:.1e}")]
    Truncation { population: f64, tolerance: f64 },
    #[error("stationary solve failed: {0}")]
    SingularSolve(String),
    #[error("integrator step collapsed to {step:.3e} at t = {time:.6e}")]
    StiffnessFailure { time: f64, step: f64 },
    #[error("correlator tail not decayed: |c(end)|/|c(0)| = {ratio:.3e}")]
    UnconvergedTail { ratio: f64 },
    #[error("only {points} points in the fit window (need at least {needed})")]
    InsufficientWindow { points: usize, needed: usize },
    #[error("no phase switches detected in the supplied records")]
    NoSwitchesDetected,
    #[error("unknown observable `{0}` for this model")]
    UnknownObservable(String),
    #[error("layout mismatch: {0}")]
    Layout(String),
}

pub type Result<T> = std::result::Result<T, Error>;

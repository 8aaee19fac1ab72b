use alloc::string::String;

/// Failures raised by the numerical engines.
///
/// Variants that carry a time refer to the simulation clock at which the
/// contract was found broken.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value produced by {context} at t = {t}")]
    NumericalOverflow { context: &'static str, t: f64 },

    #[error("operator is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("positivity violated at t = {t}: minimum eigenvalue {min_eigenvalue:.3e}; retry with a smaller dt")]
    Positivity { t: f64, min_eigenvalue: f64 },

    #[error("trace {trace} differs from 1 at t = {t}")]
    TraceDrift { t: f64, trace: f64 },

    #[error("survival probability {value} outside [0, 1] on ({t0}, {t1}]")]
    SurvivalOutOfRange { t0: f64, t1: f64, value: f64 },

    #[error("jump on channel {channel} at t = {t} has rate {rate:.3e} below threshold")]
    ZeroProbabilityJump { t: f64, channel: usize, rate: f64 },

    #[error("all detection rates vanish at t = {t}; cannot select a channel")]
    NoDetectionRate { t: f64 },

    #[error("normalization c(t) = {c} is not positive at t = {t}")]
    NonPositiveNormalization { t: f64, c: f64 },

    #[error("Fock truncation leakage {population:.3e} at t = {t}; increase the cutoff")]
    Leakage { t: f64, population: f64 },

    #[error("expected count {expected:.3e} exceeds the cap {cap:.3e}")]
    CountCap { expected: f64, cap: f64 },

    #[error("operation requires {required} detection, model is configured for {found}")]
    ModeMismatch { required: &'static str, found: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,
}

pub type Result<T> = core::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the simulator, controllers and analysis tools.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid plant parameter `{name}` = {value} (must be > 0)")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("invalid gain `{name}` = {value}")]
    InvalidGain { name: String, value: f64 },

    #[error("gimbal lock: |cos(theta)| = {cos_theta:e} is below tolerance {tolerance:e}")]
    GimbalLock { cos_theta: f64, tolerance: f64 },

    /// `cos(phi)·cos(theta)` fell below the guard; `t` is filled in by the integrator.
    #[error("thrust singularity at t = {t} s: |cos(phi)cos(theta)| = {margin:e} <= {tolerance:e}")]
    ThrustSingularity { t: f64, margin: f64, tolerance: f64 },

    #[error("numerical blow-up at t = {t} s: state component {index} = {value:e}")]
    NumericalBlowup { t: f64, index: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("Lyapunov verification requires a backstepping trace, got `{0}`")]
    WrongController(String),

    #[error("scenarios differ in shared field `{0}`")]
    MismatchedScenario(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

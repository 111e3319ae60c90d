use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A density or operator was constructed with parameters outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("kernel bandwidth is degenerate: {0}")]
    DegenerateBandwidth(String),

    #[error("output variance {variance:e} is below the degeneracy threshold {threshold:e}")]
    DegenerateOutput { variance: f64, threshold: f64 },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable evolution: Re(mu_{mode}) = {real:e} > 0")]
    Instability { mode: usize, real: f64 },

    #[error("log-posterior is not finite at the initial point")]
    InvalidStart,

    #[error("proposal adaptation failed: {0}")]
    Adaptation(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("predict density underflow at proposal {proposal} (q = {qoi:e})")]
    Underflow { proposal: usize, qoi: f64 },

    #[error("rescaling failed: {0}")]
    Rescaling(String),
}

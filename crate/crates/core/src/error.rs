use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("{op}: input {value} at flat index {index} is outside the domain")]
    Domain { op: &'static str, index: usize, value: f64 },

    #[error("backward root must hold a single element, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("constellation has zero mean energy")]
    ZeroEnergy,

    #[error("negative NLIN variance {variance} (kappa={kappa}, kappa3={kappa3}, chi=({chi1}, {chi2}, {chi3}))")]
    NegativeVariance { variance: f64, kappa: f64, kappa3: f64, chi1: f64, chi2: f64, chi3: f64 },

    #[error("non-finite noise variance {0}")]
    NonFiniteVariance(f64),

    #[error("training diverged at iteration {iteration}: loss={loss}, kappa={kappa}, kappa3={kappa3}, sigma2={sigma2}")]
    Divergence {
        iteration: usize,
        loss: f64,
        kappa: f64,
        kappa3: f64,
        sigma2: f64,
        trace: Vec<(usize, f64)>,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("sampling rate {sample_rate_ghz} GHz does not cover the WDM bandwidth {wdm_bandwidth_ghz} GHz")]
    Aliasing { sample_rate_ghz: f64, wdm_bandwidth_ghz: f64 },

    #[error("field energy grew by {growth}x in span {span}, step {step}")]
    NumericalBlowUp { span: usize, step: usize, growth: f64 },

    #[error("synchronization failed on polarization {pol}: normalized correlation {correlation}")]
    Synchronization { pol: usize, correlation: f64 },

    #[error("need at least {needed} symbols for an MI estimate, got {got}")]
    TooFewSymbols { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

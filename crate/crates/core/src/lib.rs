//! Geometric constellation shaping by end-to-end auto-encoder training
//! through differentiable GN / NLIN fiber channel models, with Monte-Carlo
//! mutual information evaluation and a split-step Fourier WDM simulator for
//! independent validation.

pub mod autodiff;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod ssf;
pub mod trainer;

pub use channel::{ChannelParams, ChiTable, LinkConfig, ModelKind, NlinCoefficients};
pub use constellation::{Constellation, Provenance};
pub use error::{Error, Result};
pub use metrics::{MiEstimate, MiSettings};
pub use trainer::{SweepSpec, TrainConfig, TrainedResult};

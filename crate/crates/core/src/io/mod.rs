//! Configuration, result tables, figure data and the plain-text helpers
//! shared by the file formats.

pub mod config;
pub mod figures;
pub mod results;
pub(crate) mod text;

pub use config::{sha256_hex, ChannelSection, RunConfig};
pub use results::{read_results, write_csv, write_results, EvalPath, ResultRow};
pub use text::write_atomic;

//! Command-line pipeline around the `candlenet` core library.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::CliError;

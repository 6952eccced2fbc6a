//! Pipeline library behind the `biphoton` command-line tool: configuration,
//! orchestration, and artifact output.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::{Mode, PipelineConfig};
pub use error::{CliError, CliResult};
pub use pipeline::Pipeline;

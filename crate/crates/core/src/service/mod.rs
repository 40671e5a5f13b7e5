//! Entry points: one-shot commands, the conversational loop, the HTTP API
//! and metrics logging.

pub mod cli;
pub mod http;
pub mod metrics;
pub mod render;
pub mod repl;

pub use cli::{run_command, Cli, EXIT_ANALYSIS_FAILURE, EXIT_OK, EXIT_USAGE};
pub use http::{router, serve, ServiceState};
pub use metrics::{events_for_turn, MetricsEvent, MetricsKind, MetricsLog};
pub use render::OutputFormat;
pub use repl::Repl;

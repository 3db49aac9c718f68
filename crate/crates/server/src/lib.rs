//! HTTP and WebSocket front end for a ULCA session, plus the `ulca` command line.

pub mod app;
pub mod cli;
pub mod protocol;

pub use app::{AppState, ServeError, ServerConfig};

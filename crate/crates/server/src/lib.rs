//! HTTP service for the write, analyze and reflect lifecycle.
//!
//! Essays are stored, analysed by background jobs and reviewed in Socratic
//! sessions. See `schemas/` for the JSON shapes.

pub mod api;
pub mod app;
pub mod config;
pub mod records;
pub mod store;

pub use app::{bind, serve, AppState, ServeError};
pub use config::ServerConfig;

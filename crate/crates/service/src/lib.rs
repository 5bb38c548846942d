//! HTTP front end for interactive sessions: edge previews while the prompt is
//! being refined, one cloud refinement on finalize, an append-only event log
//! for restart recovery, and a metrics endpoint.

pub mod app;
pub mod config;
pub mod log;
pub mod store;

pub use app::{build_pipeline, router, AppState, RoundResponse};
pub use config::ServiceConfig;

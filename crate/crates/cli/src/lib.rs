//! Batch pipeline around `ricegrade-core`: configuration, per-image analysis,
//! sample grading and run manifests.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod manifest;
pub mod pipeline;

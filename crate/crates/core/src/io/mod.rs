//! Trace ingestion and report generation.

pub mod trace;
pub mod sweep;

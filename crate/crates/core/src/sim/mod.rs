//! Discrete-event simulation of the dual-radio network and its RF-only
//! comparison system.

pub mod channel;
pub mod engine;
pub mod event;
pub mod metrics;
pub mod scenario;

pub use channel::{ChannelModel, LinkMatrix, LinkQuality};
pub use engine::{energy_accounting, run, run_baseline, with_tuned_bcc, EnergyAccounting, SimConfig, StopCondition, System};
pub use metrics::{percentile, EnergyBreakdown, NodeMetrics, RunMetrics, METRICS_HEADER};
pub use scenario::{body_scenario, ScenarioKind, ScenarioParams};

//! Scenario orchestration: configuration, the simulated round loop,
//! metrics export, and report generators.

mod metrics;
mod reports;
mod scenario;
mod sim;

pub use metrics::{ClusteringSlot, MetricsLog, MetricsRow, RejectCounts, UpdateEvent};
pub use reports::{median, reliability_range, security_report, storage_report, StorageRow};
pub use scenario::{
    ClusteringConfig, DataConfig, FlConfig, ModelChoice, NetworkConfig, ProtocolConfig, Scenario,
    Scheme, StopConfig,
};
pub use sim::{accounted_block_bytes, run_scenario, RunOutput, SimError};

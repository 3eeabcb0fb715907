//! Deterministic simulation of video-analytics pipelines on a cluster
//! snapshot: frame generation, broker topics, network transfers and
//! per-period CPU allotment.

pub mod cpu;
mod engine;
pub mod link;
pub mod metrics;
mod scenario;
pub mod topic;

pub use cpu::{cpu_grant, CpuClaim};
pub use metrics::{CpuViolation, FrameCounts, FrameRecord, MetricsReport, PhaseSummary};
pub use scenario::{Distribution, Phase, Pipeline, PodRef, SimScenario, Stressor, WorkloadParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("scenario has no seed")]
    MissingSeed,
}

/// Runs `scenario` with its own seed.
pub fn run(scenario: &SimScenario) -> Result<MetricsReport, SimError> {
    let seed = scenario.seed.ok_or(SimError::MissingSeed)?;
    engine::simulate(scenario, seed)
}

pub fn run_with_seed(scenario: &SimScenario, seed: u64) -> Result<MetricsReport, SimError> {
    engine::simulate(scenario, seed)
}

impl SimScenario {
    pub fn from_json(doc: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(doc);
        serde_path_to_error::deserialize(de)
            .map_err(|e| SimError::Scenario(format!("{}: {}", e.path(), e.inner())))
    }
}

#[cfg(test)]
mod tests;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Distribution {
    Constant {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Two-point mixture: `heavy` with probability `heavyProb`, else `light`,
    /// each scaled by a uniform factor in `[1 - spread, 1 + spread]`.
    #[serde(rename_all = "camelCase")]
    Mixture {
        light: f64,
        heavy: f64,
        heavy_prob: f64,
        #[serde(default)]
        spread: f64,
    },
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            Distribution::Mixture {
                light,
                heavy,
                heavy_prob,
                spread,
            } => {
                let base = if rng.random::<f64>() < heavy_prob {
                    heavy
                } else {
                    light
                };
                let factor = if spread > 0.0 {
                    rng.random_range(1.0 - spread..1.0 + spread)
                } else {
                    1.0
                };
                base * factor
            }
        };
        v.max(0.0)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => (low + high) / 2.0,
            Distribution::Mixture {
                light,
                heavy,
                heavy_prob,
                ..
            } => light * (1.0 - heavy_prob) + heavy * heavy_prob,
        }
    }

    pub fn scaled(&self, k: f64) -> Distribution {
        match *self {
            Distribution::Constant { value } => Distribution::Constant { value: value * k },
            Distribution::Uniform { low, high } => Distribution::Uniform {
                low: low * k,
                high: high * k,
            },
            Distribution::Mixture {
                light,
                heavy,
                heavy_prob,
                spread,
            } => Distribution::Mixture {
                light: light * k,
                heavy: heavy * k,
                heavy_prob,
                spread,
            },
        }
    }
}

/// Calibrated behaviour of the video pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkloadParams {
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Each frame is emitted up to this much after its nominal slot.
    #[serde(default)]
    pub inter_arrival_jitter_ms: f64,
    pub frame_size_bits: Distribution,
    /// Processed-frame size relative to the source frame.
    #[serde(default = "default_output_ratio")]
    pub output_size_ratio: f64,
    pub cpu_demand_ms: Distribution,
    /// Time between a frame reaching the broker and becoming consumable.
    #[serde(default)]
    pub broker_delay_ms: f64,
    /// Fixed overhead of each fetch request.
    #[serde(default)]
    pub poll_ms: f64,
    #[serde(default = "default_retention")]
    pub retention_ms: u64,
}

fn default_fps() -> f64 {
    25.0
}

fn default_output_ratio() -> f64 {
    1.0
}

fn default_retention() -> u64 {
    2000
}

fn default_period() -> u64 {
    100
}

/// Pod by namespace and workload name or pod id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PodRef {
    pub namespace: String,
    pub pod: String,
}

impl PodRef {
    pub fn new(namespace: impl Into<String>, pod: impl Into<String>) -> Self {
        PodRef {
            namespace: namespace.into(),
            pod: pod.into(),
        }
    }
}

/// One measured video stream: frames enter through `source`, are queued on
/// `broker` and processed by `analytic`, which publishes back to `broker`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Pipeline {
    pub slice_id: String,
    pub source: PodRef,
    pub broker: PodRef,
    pub analytic: PodRef,
}

/// A pod that burns all the cpu it is given while active.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stressor {
    pub pod: PodRef,
    pub active_from_ms: u64,
    pub active_until_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Phase {
    pub name: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimScenario {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub duration_ms: u64,
    #[serde(default = "default_period")]
    pub period_ms: u64,
    pub cluster: ClusterState,
    pub workload: WorkloadParams,
    pub pipelines: Vec<Pipeline>,
    #[serde(default)]
    pub stressors: Vec<Stressor>,
    #[serde(default)]
    pub phases: Vec<Phase>,
}

impl SimScenario {
    pub fn phase_at(&self, t_ms: f64) -> Option<&Phase> {
        self.phases
            .iter()
            .find(|p| t_ms >= p.start_ms as f64 && t_ms < p.end_ms as f64)
    }

    /// Phase names in declaration order, or a single `all` phase.
    pub fn phase_names(&self) -> Vec<String> {
        if self.phases.is_empty() {
            vec!["all".into()]
        } else {
            self.phases.iter().map(|p| p.name.clone()).collect()
        }
    }
}

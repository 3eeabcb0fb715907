//! Core model of a multi-tenant edge application-slice orchestrator.
//!
//! The crate holds everything that does not need a network socket: the
//! descriptor formats, the image and template registries, the simulated
//! cluster, the orchestration service logic and a discrete-event latency
//! simulator that runs on cluster snapshots.

pub mod acf_registry;
pub mod canonical;
pub mod cluster;
pub mod descriptors;
pub mod meco;
pub mod template_registry;
pub mod workload_sim;

pub use acf_registry::{AcfRegistry, ImageRecord, RegistryError};
pub use cluster::{ClusterError, ClusterObject, ClusterState, DeploymentPlan};
pub use descriptors::{
    parse_acfd, parse_mapssd, validate_mapssd, AcfDescriptor, AcfSpec, DescriptorError,
    MapssDescriptor, QosClass, ResourceSpec, ValidationReport, VirtualLinkSpec,
};
pub use meco::{InstanceRecord, InstanceStatus, Meco, MecoError};
pub use template_registry::{DeploymentPlanTemplate, ParamSet, TemplateRegistry};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::cluster::ClusterState;

    pub const TESTBED: &str = r#"{
        "nodes": [
            {"name": "kw1", "cpuCapacity": 3000, "memoryCapacity": 4096, "storageCapacity": 40960,
             "systemReserved": {"cpuMillicores": 400, "memoryMiB": 512, "storageMiB": 0}},
            {"name": "kw2", "cpuCapacity": 4000, "memoryCapacity": 4096, "storageCapacity": 40960,
             "systemReserved": {"cpuMillicores": 400, "memoryMiB": 512, "storageMiB": 0}}
        ],
        "links": [{"a": "kw1", "b": "kw2", "capacityMbps": 1000}],
        "systemWorkloads": [
            {"name": "metricsCollector", "namespace": "system", "imageRef": "metricsCollector:1.0",
             "nodeSelector": "kw1"}
        ]
    }"#;

    pub fn testbed() -> ClusterState {
        ClusterState::from_topology_json(TESTBED).unwrap()
    }
}

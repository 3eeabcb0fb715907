//! Simulated virtualized cluster: nodes, namespaces, pods, quota admission,
//! a deterministic scheduler and network/bandwidth policy state.

mod objects;
mod scheduler;
mod state;

pub use objects::{
    BandwidthPolicyDef, ClusterObject, DeploymentPlan, NamespaceDef, NetworkPolicyDef,
    PodBandwidth, PodInstance, PodPhase, ResourceQuotaDef, Resources, ServiceDef, WorkloadDef,
};
pub use scheduler::{pick_node, NodeView, ScheduleError};
pub use state::{
    effective_rate_limit, AuditViolation, ClusterError, ClusterState, ClusterTopology, Direction,
    Link, NamespaceState, Node, ObjectRef, RateLimit, DEFAULT_LINK_CAPACITY_MBPS, SYSTEM_NAMESPACE,
};

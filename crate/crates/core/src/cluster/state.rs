use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::objects::{
    BandwidthPolicyDef, ClusterObject, DeploymentPlan, PodInstance, PodPhase, WorkloadDef,
};
use super::scheduler::{pick_node, NodeView, ScheduleError};
use crate::descriptors::{is_valid_namespace_name, QosClass, ResourceSpec};

/// Namespace that exists from startup, cannot be deleted and may reach every pod.
pub const SYSTEM_NAMESPACE: &str = "system";

pub const DEFAULT_LINK_CAPACITY_MBPS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Node {
    pub name: String,
    pub cpu_capacity: u64,
    pub memory_capacity: u64,
    pub storage_capacity: u64,
    #[serde(default)]
    pub system_reserved: ResourceSpec,
}

impl Node {
    pub fn capacity(&self) -> ResourceSpec {
        ResourceSpec::new(
            self.cpu_capacity,
            self.memory_capacity,
            self.storage_capacity,
        )
    }

    pub fn allocatable(&self) -> ResourceSpec {
        self.capacity().saturating_sub(self.system_reserved)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Link {
    pub a: String,
    pub b: String,
    pub capacity_mbps: u64,
}

/// Cluster topology file contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterTopology {
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(default = "default_link_capacity")]
    pub default_link_capacity_mbps: u64,
    /// Workloads pre-deployed in the system namespace.
    #[serde(default)]
    pub system_workloads: Vec<WorkloadDef>,
}

fn default_link_capacity() -> u64 {
    DEFAULT_LINK_CAPACITY_MBPS
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NamespaceState {
    pub name: String,
    pub objects: Vec<ClusterObject>,
    pub quotas: Vec<ResourceSpec>,
    pub allow_from_namespaces: BTreeSet<String>,
    pub pods: BTreeMap<String, PodInstance>,
}

impl NamespaceState {
    fn new(name: &str) -> Self {
        NamespaceState {
            name: name.to_string(),
            ..Default::default()
        }
    }

    /// Σ requests of non-terminated pods.
    pub fn requested(&self) -> ResourceSpec {
        self.pods
            .values()
            .filter(|p| p.phase != PodPhase::Terminated)
            .fold(ResourceSpec::ZERO, |acc, p| {
                acc.saturating_add(p.resources.requests)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectRef {
    pub kind: String,
    pub namespace: String,
    pub name: String,
}

impl ObjectRef {
    fn new(kind: &str, namespace: &str, name: impl Into<String>) -> Self {
        ObjectRef {
            kind: kind.to_string(),
            namespace: namespace.to_string(),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Ingress,
    Egress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateLimit {
    Mbps(u64),
    Unlimited,
}

impl RateLimit {
    pub fn min(self, other: RateLimit) -> RateLimit {
        match (self, other) {
            (RateLimit::Mbps(a), RateLimit::Mbps(b)) => RateLimit::Mbps(a.min(b)),
            (RateLimit::Mbps(a), RateLimit::Unlimited)
            | (RateLimit::Unlimited, RateLimit::Mbps(a)) => RateLimit::Mbps(a),
            (RateLimit::Unlimited, RateLimit::Unlimited) => RateLimit::Unlimited,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("namespace {0} already exists")]
    NamespaceExists(String),
    #[error("namespace {0} not found")]
    NotFound(String),
    #[error("namespace {0} is protected")]
    Protected(String),
    #[error("quota exceeded in namespace {namespace}: requested {requested}, quota {quota}")]
    QuotaExceeded {
        namespace: String,
        requested: ResourceSpec,
        quota: ResourceSpec,
    },
    #[error("pod {pod} unschedulable: {reason}")]
    Unschedulable { pod: String, reason: ScheduleError },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("injected fault at object {0}")]
    InjectedFault(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "invariant", rename_all = "camelCase")]
pub enum AuditViolation {
    /// Q1: namespace requests exceed a quota.
    Quota {
        namespace: String,
        requested: ResourceSpec,
        quota: ResourceSpec,
    },
    /// N1: node requests exceed allocatable.
    Capacity {
        node: String,
        used: ResourceSpec,
        allocatable: ResourceSpec,
    },
    RunningUnassigned {
        pod: String,
    },
    UnknownNode {
        pod: String,
        node: String,
    },
    ForeignPod {
        namespace: String,
        pod: String,
    },
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

/// The simulated cluster: nodes, links and namespaces with their pods.
/// Node usage is always derived from pod assignments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterState {
    pub nodes: BTreeMap<String, Node>,
    pub links: Vec<Link>,
    pub default_link_capacity_mbps: u64,
    pub namespaces: BTreeMap<String, NamespaceState>,
    pub revision: u64,
}

impl ClusterState {
    pub fn from_topology(topo: ClusterTopology) -> Result<Self, ClusterError> {
        let mut nodes = BTreeMap::new();
        for n in topo.nodes {
            if !n.system_reserved.fits_within(&n.capacity()) {
                return Err(ClusterError::InvalidTopology(format!(
                    "node {} reserves more than its capacity",
                    n.name
                )));
            }
            if nodes.insert(n.name.clone(), n).is_some() {
                return Err(ClusterError::InvalidTopology("duplicate node name".into()));
            }
        }
        let mut links = Vec::new();
        for l in topo.links {
            if !nodes.contains_key(&l.a) || !nodes.contains_key(&l.b) || l.a == l.b {
                return Err(ClusterError::InvalidTopology(format!(
                    "bad link {}-{}",
                    l.a, l.b
                )));
            }
            if l.capacity_mbps == 0 {
                return Err(ClusterError::InvalidTopology("zero link capacity".into()));
            }
            let (a, b) = if l.a <= l.b { (l.a, l.b) } else { (l.b, l.a) };
            links.push(Link {
                a,
                b,
                capacity_mbps: l.capacity_mbps,
            });
        }
        links.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        links.dedup_by(|x, y| x.a == y.a && x.b == y.b);

        let mut state = ClusterState {
            nodes,
            links,
            default_link_capacity_mbps: topo.default_link_capacity_mbps,
            namespaces: BTreeMap::new(),
            revision: 0,
        };
        let mut system = NamespaceState::new(SYSTEM_NAMESPACE);
        for w in topo.system_workloads {
            let mut w = w;
            w.namespace = SYSTEM_NAMESPACE.to_string();
            system.objects.push(ClusterObject::Workload(w));
        }
        state
            .namespaces
            .insert(SYSTEM_NAMESPACE.to_string(), system);
        let pods = {
            let ns = &state.namespaces[SYSTEM_NAMESPACE];
            state
                .create_and_schedule(ns.objects.iter())
                .map_err(|e| ClusterError::InvalidTopology(e.to_string()))?
        };
        let ns = state.namespaces.get_mut(SYSTEM_NAMESPACE).unwrap();
        for mut p in pods {
            p.phase = PodPhase::Running;
            ns.pods.insert(p.pod_id.clone(), p);
        }
        Ok(state)
    }

    pub fn from_topology_json(doc: &str) -> Result<Self, ClusterError> {
        let topo: ClusterTopology =
            serde_json::from_str(doc).map_err(|e| ClusterError::InvalidTopology(e.to_string()))?;
        Self::from_topology(topo)
    }

    pub fn node_usage(&self, node: &str) -> ResourceSpec {
        self.pods()
            .filter(|p| p.phase != PodPhase::Terminated && p.assigned_node.as_deref() == Some(node))
            .fold(ResourceSpec::ZERO, |acc, p| {
                acc.saturating_add(p.resources.requests)
            })
    }

    pub fn pods(&self) -> impl Iterator<Item = &PodInstance> {
        self.namespaces.values().flat_map(|ns| ns.pods.values())
    }

    pub fn pod(&self, namespace: &str, pod_id: &str) -> Option<&PodInstance> {
        self.namespaces.get(namespace)?.pods.get(pod_id)
    }

    /// First pod of a workload (replica 0).
    pub fn workload_pod(&self, namespace: &str, workload: &str) -> Option<&PodInstance> {
        self.namespaces
            .get(namespace)?
            .pods
            .values()
            .find(|p| p.workload_ref == workload)
    }

    pub fn has_namespace(&self, name: &str) -> bool {
        self.namespaces.contains_key(name)
    }

    /// Link capacity between two nodes; `None` for traffic within one node.
    pub fn link_capacity(&self, a: &str, b: &str) -> Option<u64> {
        if a == b {
            return None;
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Some(
            self.links
                .iter()
                .find(|l| l.a == a && l.b == b)
                .map_or(self.default_link_capacity_mbps, |l| l.capacity_mbps),
        )
    }

    pub fn apply_plan(&mut self, plan: &DeploymentPlan) -> Result<Vec<ObjectRef>, ClusterError> {
        self.apply_plan_with_fault(plan, None)
    }

    /// Applies `plan` atomically. `fail_at_object` aborts while recording the
    /// object with that index, which must leave the state untouched.
    pub fn apply_plan_with_fault(
        &mut self,
        plan: &DeploymentPlan,
        fail_at_object: Option<usize>,
    ) -> Result<Vec<ObjectRef>, ClusterError> {
        let ns_name = plan.namespace_name.as_str();
        if self.namespaces.contains_key(ns_name) {
            return Err(ClusterError::NamespaceExists(ns_name.to_string()));
        }
        if !is_valid_namespace_name(ns_name) {
            return Err(ClusterError::InvalidPlan(format!(
                "`{ns_name}` is not a valid namespace name"
            )));
        }
        let mut next = self.clone();
        next.namespaces
            .insert(ns_name.to_string(), NamespaceState::new(ns_name));
        let mut refs = vec![ObjectRef::new("Namespace", ns_name, ns_name)];

        let mut workload_names = BTreeSet::new();
        {
            let ns = next.namespaces.get_mut(ns_name).unwrap();
            for (i, obj) in plan.objects.iter().enumerate() {
                if fail_at_object == Some(i) {
                    return Err(ClusterError::InjectedFault(i));
                }
                if obj.namespace() != ns_name {
                    return Err(ClusterError::InvalidPlan(format!(
                        "{} {} targets foreign namespace {}",
                        obj.kind(),
                        obj.name(),
                        obj.namespace()
                    )));
                }
                match obj {
                    ClusterObject::Namespace(_) => continue,
                    ClusterObject::Workload(w) => {
                        check_workload(w)?;
                        if !workload_names.insert(w.name.clone()) {
                            return Err(ClusterError::InvalidPlan(format!(
                                "duplicate workload {}",
                                w.name
                            )));
                        }
                    }
                    ClusterObject::ResourceQuota(q) => ns.quotas.push(q.totals),
                    ClusterObject::NetworkPolicy(p) => ns
                        .allow_from_namespaces
                        .extend(p.allow_from_namespaces.iter().cloned()),
                    ClusterObject::BandwidthPolicy(_) | ClusterObject::Service(_) => {}
                }
                refs.push(ObjectRef::new(obj.kind(), ns_name, obj.name()));
                ns.objects.push(obj.clone());
            }
        }

        // admission (Q1) before scheduling (N1)
        let requested = plan
            .objects
            .iter()
            .filter_map(|o| match o {
                ClusterObject::Workload(w) => Some(w.resources.requests.scale(w.replicas as u64)),
                _ => None,
            })
            .fold(ResourceSpec::ZERO, ResourceSpec::saturating_add);
        for quota in &next.namespaces[ns_name].quotas {
            if !requested.fits_within(quota) {
                return Err(ClusterError::QuotaExceeded {
                    namespace: ns_name.to_string(),
                    requested,
                    quota: *quota,
                });
            }
        }

        let pods = next.create_and_schedule(plan.objects.iter())?;
        let ns = next.namespaces.get_mut(ns_name).unwrap();
        for p in pods {
            refs.push(ObjectRef::new("Pod", ns_name, p.pod_id.clone()));
            ns.pods.insert(p.pod_id.clone(), p);
        }
        for obj in &plan.objects {
            if let ClusterObject::BandwidthPolicy(bp) = obj {
                apply_bandwidth(ns, bp)?;
            }
        }
        for p in ns.pods.values_mut() {
            p.phase = PodPhase::Running;
        }
        next.revision += 1;
        *self = next;
        log::info!("applied plan {} ({} refs)", ns_name, refs.len());
        Ok(refs)
    }

    /// Creates pods for every workload in order and schedules them against
    /// the current usage plus pods placed earlier in the same batch.
    fn create_and_schedule<'o>(
        &self,
        objects: impl Iterator<Item = &'o ClusterObject>,
    ) -> Result<Vec<PodInstance>, ClusterError> {
        let mut used: BTreeMap<&str, ResourceSpec> = self
            .nodes
            .keys()
            .map(|n| (n.as_str(), self.node_usage(n)))
            .collect();
        let mut placed = Vec::new();
        for obj in objects {
            let ClusterObject::Workload(w) = obj else {
                continue;
            };
            for i in 0..w.replicas {
                let mut pod = PodInstance::from_workload(w, i);
                let views: Vec<NodeView> = self
                    .nodes
                    .values()
                    .map(|n| NodeView {
                        name: n.name.as_str(),
                        allocatable: n.allocatable(),
                        used: used[n.name.as_str()],
                    })
                    .collect();
                let node = pick_node(
                    &views,
                    &pod.resources.requests,
                    pod.node_selector.as_deref(),
                )
                .map_err(|reason| ClusterError::Unschedulable {
                    pod: format!("{}/{}", pod.namespace, pod.pod_id),
                    reason,
                })?;
                let slot = used.get_mut(node).unwrap();
                *slot = slot.saturating_add(pod.resources.requests);
                pod.assigned_node = Some(node.to_string());
                placed.push(pod);
            }
        }
        Ok(placed)
    }

    /// Removes a namespace with everything in it and releases node capacity.
    pub fn delete_namespace_cascade(&mut self, name: &str) -> Result<Vec<ObjectRef>, ClusterError> {
        if name == SYSTEM_NAMESPACE {
            return Err(ClusterError::Protected(name.to_string()));
        }
        let ns = self
            .namespaces
            .remove(name)
            .ok_or_else(|| ClusterError::NotFound(name.to_string()))?;
        let mut refs: Vec<ObjectRef> = ns
            .pods
            .keys()
            .map(|p| ObjectRef::new("Pod", name, p.clone()))
            .collect();
        refs.extend(
            ns.objects
                .iter()
                .map(|o| ObjectRef::new(o.kind(), name, o.name())),
        );
        refs.push(ObjectRef::new("Namespace", name, name));
        self.revision += 1;
        log::info!("deleted namespace {name} ({} refs)", refs.len());
        Ok(refs)
    }

    /// Equality ignoring the revision counter.
    pub fn same_contents(&self, other: &ClusterState) -> bool {
        self.nodes == other.nodes
            && self.links == other.links
            && self.default_link_capacity_mbps == other.default_link_capacity_mbps
            && self.namespaces == other.namespaces
    }

    pub fn traffic_permitted(&self, src: &PodInstance, dst: &PodInstance) -> bool {
        if !src.is_running() || !dst.is_running() {
            return false;
        }
        if src.namespace == dst.namespace || src.namespace == SYSTEM_NAMESPACE {
            return true;
        }
        self.namespaces
            .get(&dst.namespace)
            .is_some_and(|ns| ns.allow_from_namespaces.contains(&src.namespace))
    }

    /// Checks Q1, N1 and pod/namespace consistency.
    pub fn audit(&self) -> Vec<AuditViolation> {
        let mut out = Vec::new();
        for (name, ns) in &self.namespaces {
            let requested = ns.requested();
            for quota in &ns.quotas {
                if !requested.fits_within(quota) {
                    out.push(AuditViolation::Quota {
                        namespace: name.clone(),
                        requested,
                        quota: *quota,
                    });
                }
            }
            for (id, p) in &ns.pods {
                if &p.namespace != name || &p.pod_id != id {
                    out.push(AuditViolation::ForeignPod {
                        namespace: name.clone(),
                        pod: id.clone(),
                    });
                }
                match &p.assigned_node {
                    None if p.is_running() => out.push(AuditViolation::RunningUnassigned {
                        pod: format!("{name}/{id}"),
                    }),
                    Some(n) if !self.nodes.contains_key(n) => {
                        out.push(AuditViolation::UnknownNode {
                            pod: format!("{name}/{id}"),
                            node: n.clone(),
                        })
                    }
                    _ => {}
                }
            }
        }
        for (name, node) in &self.nodes {
            let used = self.node_usage(name);
            if !used.fits_within(&node.allocatable()) {
                out.push(AuditViolation::Capacity {
                    node: name.clone(),
                    used,
                    allocatable: node.allocatable(),
                });
            }
        }
        out
    }
}

pub fn effective_rate_limit(pod: &PodInstance, direction: Direction) -> RateLimit {
    let v = match direction {
        Direction::Ingress => pod.bandwidth.ingress_mbps,
        Direction::Egress => pod.bandwidth.egress_mbps,
    };
    v.map_or(RateLimit::Unlimited, RateLimit::Mbps)
}

fn check_workload(w: &WorkloadDef) -> Result<(), ClusterError> {
    if w.replicas == 0 {
        return Err(ClusterError::InvalidPlan(format!(
            "workload {} has zero replicas",
            w.name
        )));
    }
    let r = &w.resources;
    match w.qos_class {
        QosClass::Guaranteed => {
            if r.requests.cpu_millicores != r.limits.cpu_millicores
                || r.requests.memory_mib != r.limits.memory_mib
                || r.requests.cpu_millicores == 0
            {
                return Err(ClusterError::InvalidPlan(format!(
                    "Guaranteed workload {} needs requests = limits with cpu > 0",
                    w.name
                )));
            }
        }
        QosClass::BestEffort => {
            if !r.requests.is_zero() {
                return Err(ClusterError::InvalidPlan(format!(
                    "BestEffort workload {} must not request resources",
                    w.name
                )));
            }
        }
    }
    Ok(())
}

fn apply_bandwidth(ns: &mut NamespaceState, bp: &BandwidthPolicyDef) -> Result<(), ClusterError> {
    let mut matched = false;
    for p in ns.pods.values_mut() {
        if p.workload_ref == bp.pod_name || p.pod_id == bp.pod_name {
            matched = true;
            if bp.ingress_mbps.is_some() {
                p.bandwidth.ingress_mbps = bp.ingress_mbps;
            }
            if bp.egress_mbps.is_some() {
                p.bandwidth.egress_mbps = bp.egress_mbps;
            }
        }
    }
    if bp.ingress_mbps == Some(0) || bp.egress_mbps == Some(0) {
        return Err(ClusterError::InvalidPlan(format!(
            "bandwidth policy for {} has a zero rate",
            bp.pod_name
        )));
    }
    if matched {
        Ok(())
    } else {
        Err(ClusterError::InvalidPlan(format!(
            "bandwidth policy targets unknown pod {}",
            bp.pod_name
        )))
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::descriptors::{QosClass, ResourceSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    #[serde(default)]
    pub requests: ResourceSpec,
    #[serde(default)]
    pub limits: ResourceSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NamespaceDef {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkloadDef {
    pub name: String,
    pub namespace: String,
    pub image_ref: String,
    #[serde(default, deserialize_with = "string_map")]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub resources: Resources,
    #[serde(default)]
    pub qos_class: QosClass,
    #[serde(
        default,
        deserialize_with = "non_empty_string",
        skip_serializing_if = "Option::is_none"
    )]
    pub node_selector: Option<String>,
    #[serde(default = "one")]
    pub replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceQuotaDef {
    pub namespace: String,
    pub totals: ResourceSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkPolicyDef {
    pub namespace: String,
    /// Accepts a JSON array or a comma-separated string; blanks are ignored.
    #[serde(default, deserialize_with = "namespace_set")]
    pub allow_from_namespaces: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandwidthPolicyDef {
    pub namespace: String,
    /// Workload name (applies to all its replicas) or a single pod id.
    pub pod_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingress_mbps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egress_mbps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceDef {
    pub namespace: String,
    pub name: String,
    pub target_workload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ClusterObject {
    Namespace(NamespaceDef),
    Workload(WorkloadDef),
    ResourceQuota(ResourceQuotaDef),
    NetworkPolicy(NetworkPolicyDef),
    BandwidthPolicy(BandwidthPolicyDef),
    Service(ServiceDef),
}

impl ClusterObject {
    pub fn kind(&self) -> &'static str {
        match self {
            ClusterObject::Namespace(_) => "Namespace",
            ClusterObject::Workload(_) => "Workload",
            ClusterObject::ResourceQuota(_) => "ResourceQuota",
            ClusterObject::NetworkPolicy(_) => "NetworkPolicy",
            ClusterObject::BandwidthPolicy(_) => "BandwidthPolicy",
            ClusterObject::Service(_) => "Service",
        }
    }

    /// The namespace the object lives in (a namespace object names itself).
    pub fn namespace(&self) -> &str {
        match self {
            ClusterObject::Namespace(o) => &o.name,
            ClusterObject::Workload(o) => &o.namespace,
            ClusterObject::ResourceQuota(o) => &o.namespace,
            ClusterObject::NetworkPolicy(o) => &o.namespace,
            ClusterObject::BandwidthPolicy(o) => &o.namespace,
            ClusterObject::Service(o) => &o.namespace,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ClusterObject::Namespace(o) => o.name.clone(),
            ClusterObject::Workload(o) => o.name.clone(),
            ClusterObject::ResourceQuota(o) => format!("{}-quota", o.namespace),
            ClusterObject::NetworkPolicy(o) => format!("{}-netpol", o.namespace),
            ClusterObject::BandwidthPolicy(o) => format!("{}-bandwidth", o.pod_name),
            ClusterObject::Service(o) => o.name.clone(),
        }
    }
}

/// Resolved set of cluster objects realizing one slice subnet instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentPlan {
    pub namespace_name: String,
    pub objects: Vec<ClusterObject>,
    pub source_template_id: String,
    pub release_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PodPhase {
    Pending,
    Running,
    Terminated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PodBandwidth {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingress_mbps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egress_mbps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PodInstance {
    pub pod_id: String,
    pub workload_ref: String,
    pub namespace: String,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_node: Option<String>,
    pub phase: PodPhase,
    pub resources: Resources,
    pub qos_class: QosClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_selector: Option<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub bandwidth: PodBandwidth,
}

impl PodInstance {
    pub fn from_workload(w: &WorkloadDef, index: u32) -> Self {
        PodInstance {
            pod_id: format!("{}-{index}", w.name),
            workload_ref: w.name.clone(),
            namespace: w.namespace.clone(),
            image_ref: w.image_ref.clone(),
            assigned_node: None,
            phase: PodPhase::Pending,
            resources: w.resources,
            qos_class: w.qos_class,
            node_selector: w.node_selector.clone(),
            env: w.env.clone(),
            bandwidth: PodBandwidth::default(),
        }
    }

    pub fn is_running(&self) -> bool {
        self.phase == PodPhase::Running
    }
}

fn one() -> u32 {
    1
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn string_map<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<String, String>, D::Error> {
    let raw = BTreeMap::<String, Value>::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| match scalar_to_string(&v) {
            Some(s) => Ok((k, s)),
            None => Err(serde::de::Error::custom(format!(
                "env value for `{k}` must be a scalar"
            ))),
        })
        .collect()
}

fn non_empty_string<'de, D: Deserializer<'de>>(de: D) -> Result<Option<String>, D::Error> {
    let raw = Option::<String>::deserialize(de)?;
    Ok(raw.filter(|s| !s.trim().is_empty()))
}

fn namespace_set<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeSet<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<String>),
        Joined(String),
    }
    let items = match Raw::deserialize(de)? {
        Raw::List(v) => v,
        Raw::Joined(s) => s.split(',').map(str::to_string).collect(),
    };
    Ok(items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

//! Slice-subnet descriptor (MAPSSD) and ACF descriptor (ACFD) wire formats.
//!
//! Both documents are JSON. Parsing only checks structure; semantic checks on a
//! MAPSSD live in [`validate_mapssd`] and report violations as data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Compute, memory and storage amounts in normalized units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceSpec {
    #[serde(default)]
    pub cpu_millicores: u64,
    #[serde(rename = "memoryMiB", default)]
    pub memory_mib: u64,
    #[serde(rename = "storageMiB", default)]
    pub storage_mib: u64,
}

impl ResourceSpec {
    pub const ZERO: ResourceSpec = ResourceSpec {
        cpu_millicores: 0,
        memory_mib: 0,
        storage_mib: 0,
    };

    pub fn new(cpu_millicores: u64, memory_mib: u64, storage_mib: u64) -> Self {
        Self {
            cpu_millicores,
            memory_mib,
            storage_mib,
        }
    }

    pub fn cpu(cpu_millicores: u64) -> Self {
        Self::new(cpu_millicores, 0, 0)
    }

    pub fn saturating_add(self, other: ResourceSpec) -> ResourceSpec {
        ResourceSpec {
            cpu_millicores: self.cpu_millicores.saturating_add(other.cpu_millicores),
            memory_mib: self.memory_mib.saturating_add(other.memory_mib),
            storage_mib: self.storage_mib.saturating_add(other.storage_mib),
        }
    }

    pub fn checked_sub(self, other: ResourceSpec) -> Option<ResourceSpec> {
        Some(ResourceSpec {
            cpu_millicores: self.cpu_millicores.checked_sub(other.cpu_millicores)?,
            memory_mib: self.memory_mib.checked_sub(other.memory_mib)?,
            storage_mib: self.storage_mib.checked_sub(other.storage_mib)?,
        })
    }

    pub fn saturating_sub(self, other: ResourceSpec) -> ResourceSpec {
        ResourceSpec {
            cpu_millicores: self.cpu_millicores.saturating_sub(other.cpu_millicores),
            memory_mib: self.memory_mib.saturating_sub(other.memory_mib),
            storage_mib: self.storage_mib.saturating_sub(other.storage_mib),
        }
    }

    pub fn scale(self, factor: u64) -> ResourceSpec {
        ResourceSpec {
            cpu_millicores: self.cpu_millicores.saturating_mul(factor),
            memory_mib: self.memory_mib.saturating_mul(factor),
            storage_mib: self.storage_mib.saturating_mul(factor),
        }
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &ResourceSpec) -> bool {
        self.cpu_millicores <= other.cpu_millicores
            && self.memory_mib <= other.memory_mib
            && self.storage_mib <= other.storage_mib
    }

    pub fn is_zero(&self) -> bool {
        *self == ResourceSpec::ZERO
    }
}

impl fmt::Display for ResourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cpu={}m mem={}Mi storage={}Mi",
            self.cpu_millicores, self.memory_mib, self.storage_mib
        )
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum QosClass {
    Guaranteed,
    #[default]
    BestEffort,
}

impl QosClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            QosClass::Guaranteed => "Guaranteed",
            QosClass::BestEffort => "BestEffort",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AcfSpec {
    pub acf_id: String,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<ResourceSpec>,
    #[serde(default)]
    pub qos_class: QosClass,
    #[serde(default)]
    pub custom_params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_selector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VirtualLinkSpec {
    pub from: String,
    pub to: String,
    pub max_bandwidth_mbps: u64,
}

/// The VI-agnostic blueprint of one application slice subnet instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MapssDescriptor {
    pub mapss_id: String,
    #[serde(default)]
    pub description: String,
    pub mapss_impl_template_id: String,
    pub subnet_resources: ResourceSpec,
    #[serde(default)]
    pub acfs: Vec<AcfSpec>,
    #[serde(default)]
    pub virtual_links: Vec<VirtualLinkSpec>,
}

impl MapssDescriptor {
    pub fn acf(&self, acf_id: &str) -> Option<&AcfSpec> {
        self.acfs.iter().find(|a| a.acf_id == acf_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigParamType {
    Int,
    Float,
    Bool,
    String,
}

impl ConfigParamType {
    pub fn accepts(&self, literal: &str) -> bool {
        match self {
            ConfigParamType::Int => literal.trim().parse::<i64>().is_ok(),
            ConfigParamType::Float => literal.trim().parse::<f64>().is_ok(),
            ConfigParamType::Bool => matches!(literal.trim(), "true" | "false"),
            ConfigParamType::String => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigParam {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ConfigParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default)]
    pub documentation: String,
}

/// ACF user manual: an opaque API section plus typed configuration parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AcfDescriptor {
    pub acf_id: String,
    pub image_ref: String,
    #[serde(default)]
    pub api_spec: String,
    #[serde(default)]
    pub config_params: Vec<ConfigParam>,
}

impl AcfDescriptor {
    /// Checks the ACFD invariants: unique parameter names, defaults matching types.
    pub fn check(&self) -> Result<(), DescriptorError> {
        let mut seen = BTreeSet::new();
        for (i, p) in self.config_params.iter().enumerate() {
            if !seen.insert(p.name.as_str()) {
                return Err(DescriptorError::Schema {
                    path: format!("configParams[{i}].name"),
                    message: format!("duplicate config param `{}`", p.name),
                });
            }
            if let Some(default) = &p.default {
                if !p.param_type.accepts(default) {
                    return Err(DescriptorError::Schema {
                        path: format!("configParams[{i}].default"),
                        message: format!("default `{default}` is not a valid {:?}", p.param_type),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescriptorError {
    #[error("syntax error at {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl DescriptorError {
    pub fn path(&self) -> &str {
        match self {
            DescriptorError::Syntax { path, .. } | DescriptorError::Schema { path, .. } => path,
        }
    }
}

fn parse_document<T: DeserializeOwned>(document: &[u8]) -> Result<T, DescriptorError> {
    let text = std::str::from_utf8(document).map_err(|e| DescriptorError::Syntax {
        path: ".".into(),
        message: format!("document is not UTF-8: {e}"),
    })?;
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let message = inner.to_string();
        if inner.is_data() {
            DescriptorError::Schema { path, message }
        } else {
            DescriptorError::Syntax { path, message }
        }
    })?;
    de.end().map_err(|e| DescriptorError::Syntax {
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Deserializes an already-parsed JSON value; every failure is a schema error.
pub(crate) fn parse_document_value<T: DeserializeOwned>(
    value: serde_json::Value,
) -> Result<T, DescriptorError> {
    serde_path_to_error::deserialize(value).map_err(|err| DescriptorError::Schema {
        path: err.path().to_string(),
        message: err.into_inner().to_string(),
    })
}

pub fn parse_mapssd(document: &[u8]) -> Result<MapssDescriptor, DescriptorError> {
    parse_document(document)
}

pub fn parse_acfd(document: &[u8]) -> Result<AcfDescriptor, DescriptorError> {
    let acfd: AcfDescriptor = parse_document(document)?;
    acfd.check()?;
    Ok(acfd)
}

/// Read-only view of the images an orchestrator may deploy.
pub trait ImageCatalog {
    fn has_image(&self, image_ref: &str) -> bool;
}

impl<S: AsRef<str>> ImageCatalog for [S] {
    fn has_image(&self, image_ref: &str) -> bool {
        self.iter().any(|s| s.as_ref() == image_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Cpu,
    Memory,
    Storage,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceKind::Cpu => "cpu",
            ResourceKind::Memory => "memory",
            ResourceKind::Storage => "storage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "camelCase")]
pub enum Violation {
    InvalidMapssId {
        mapss_id: String,
    },
    DuplicateAcfId {
        acf_id: String,
    },
    ResourceSumExceeded {
        resource: ResourceKind,
        sum: u64,
        subnet: u64,
    },
    DanglingEndpoint {
        acf_id: String,
    },
    SelfLink {
        acf_id: String,
    },
    NonPositiveBandwidth {
        from: String,
        to: String,
    },
    UnknownImage {
        acf_id: String,
        image_ref: String,
    },
    GuaranteedWithoutCpu {
        acf_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidMapssId { mapss_id } => {
                write!(f, "mapssId `{mapss_id}` is not a valid namespace name")
            }
            Violation::DuplicateAcfId { acf_id } => write!(f, "duplicate acfId {acf_id}"),
            Violation::ResourceSumExceeded {
                resource,
                sum,
                subnet,
            } => write!(f, "acf {resource} sum {sum} > subnet {subnet}"),
            Violation::DanglingEndpoint { acf_id } => write!(f, "dangling endpoint {acf_id}"),
            Violation::SelfLink { acf_id } => write!(f, "virtual link from {acf_id} to itself"),
            Violation::NonPositiveBandwidth { from, to } => {
                write!(f, "virtual link {from}->{to} has non-positive bandwidth")
            }
            Violation::UnknownImage { acf_id, image_ref } => {
                write!(f, "image {image_ref} of acf {acf_id} not found in registry")
            }
            Violation::GuaranteedWithoutCpu { acf_id } => {
                write!(f, "Guaranteed acf {acf_id} has no cpu request")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_deployable(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when every violation is a missing image.
    pub fn only_missing_images(&self) -> bool {
        !self.violations.is_empty()
            && self
                .violations
                .iter()
                .all(|v| matches!(v, Violation::UnknownImage { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Namespace-name rule for slice ids: alphanumeric and `-`, starting and
/// ending alphanumeric, at most 63 characters. Mixed case is accepted.
pub fn is_valid_namespace_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 63
        && bytes
            .iter()
            .all(|b| b.is_ascii_alphanumeric() || *b == b'-')
        && bytes[0].is_ascii_alphanumeric()
        && bytes[bytes.len() - 1].is_ascii_alphanumeric()
}

pub fn validate_mapssd<C: ImageCatalog + ?Sized>(
    d: &MapssDescriptor,
    registry: &C,
) -> ValidationReport {
    let mut violations = Vec::new();
    if !is_valid_namespace_name(&d.mapss_id) {
        violations.push(Violation::InvalidMapssId {
            mapss_id: d.mapss_id.clone(),
        });
    }

    let mut ids = BTreeSet::new();
    for acf in &d.acfs {
        if !ids.insert(acf.acf_id.as_str()) {
            violations.push(Violation::DuplicateAcfId {
                acf_id: acf.acf_id.clone(),
            });
        }
    }

    let sum = d
        .acfs
        .iter()
        .filter_map(|a| a.resources)
        .fold(ResourceSpec::ZERO, ResourceSpec::saturating_add);
    let subnet = d.subnet_resources;
    for (resource, s, limit) in [
        (ResourceKind::Cpu, sum.cpu_millicores, subnet.cpu_millicores),
        (ResourceKind::Memory, sum.memory_mib, subnet.memory_mib),
        (ResourceKind::Storage, sum.storage_mib, subnet.storage_mib),
    ] {
        if s > limit {
            violations.push(Violation::ResourceSumExceeded {
                resource,
                sum: s,
                subnet: limit,
            });
        }
    }

    for link in &d.virtual_links {
        for end in [&link.from, &link.to] {
            if !ids.contains(end.as_str()) {
                violations.push(Violation::DanglingEndpoint {
                    acf_id: end.clone(),
                });
            }
        }
        if link.from == link.to {
            violations.push(Violation::SelfLink {
                acf_id: link.from.clone(),
            });
        }
        if link.max_bandwidth_mbps == 0 {
            violations.push(Violation::NonPositiveBandwidth {
                from: link.from.clone(),
                to: link.to.clone(),
            });
        }
    }

    for acf in &d.acfs {
        if !registry.has_image(&acf.image_ref) {
            violations.push(Violation::UnknownImage {
                acf_id: acf.acf_id.clone(),
                image_ref: acf.image_ref.clone(),
            });
        }
        if acf.qos_class == QosClass::Guaranteed
            && acf.resources.is_none_or(|r| r.cpu_millicores == 0)
        {
            violations.push(Violation::GuaranteedWithoutCpu {
                acf_id: acf.acf_id.clone(),
            });
        }
    }

    ValidationReport { violations }
}

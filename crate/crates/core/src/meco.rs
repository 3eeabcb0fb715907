//! Orchestration service: instantiates and terminates slice subnet instances
//! against the cluster and keeps a ledger of them.
//!
//! Transport-agnostic; an HTTP front end maps [`MecoError::status`] onto
//! response codes.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use crate::acf_registry::{AcfRegistry, ImageRecord, RegistryError};
use crate::cluster::{ClusterError, ClusterState, DeploymentPlan, ObjectRef, SYSTEM_NAMESPACE};
use crate::descriptors::{parse_mapssd, validate_mapssd, DescriptorError, MapssDescriptor};
use crate::template_registry::{
    derive_params, render, DeploymentPlanTemplate, TemplateError, TemplateRegistry,
};

/// Instantiation steps, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Step {
    Parse,
    Validate,
    FetchTemplate,
    DeriveParams,
    Render,
    Apply,
    Record,
}

impl Step {
    pub const ALL: [Step; 7] = [
        Step::Parse,
        Step::Validate,
        Step::FetchTemplate,
        Step::DeriveParams,
        Step::Render,
        Step::Apply,
        Step::Record,
    ];
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("step serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// One-shot failure injected into the next instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Fail on entry to the step. `Record` fails after the plan was applied.
    AtStep(Step),
    /// Fail while the cluster records the plan object with this index.
    AtApplyObject(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "camelCase")]
pub enum InstanceStatus {
    Deploying,
    Active,
    Terminating,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceRecord {
    pub mapss_id: String,
    pub descriptor: MapssDescriptor,
    pub template_id: String,
    pub rendered_plan: Option<DeploymentPlan>,
    pub applied_refs: Vec<ObjectRef>,
    pub status: InstanceStatus,
    pub created_at_revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TerminationReport {
    pub mapss_id: String,
    pub deleted_objects: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ErrorKind {
    Syntax,
    Schema,
    Validation,
    Param,
    UnknownTemplate,
    UnknownImage,
    NotFound,
    AlreadyActive,
    NamespaceExists,
    QuotaExceeded,
    Unschedulable,
    Render,
    Fault,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
#[error("{kind:?}: {message}")]
pub struct MecoError {
    pub kind: ErrorKind,
    pub step: Option<Step>,
    pub message: String,
}

impl MecoError {
    fn new(kind: ErrorKind, step: Option<Step>, message: impl Into<String>) -> Self {
        MecoError {
            kind,
            step,
            message: message.into(),
        }
    }

    fn at(step: Step, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self::new(kind, Some(step), message)
    }

    /// HTTP status code for this error.
    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::Syntax | ErrorKind::Schema | ErrorKind::Validation | ErrorKind::Param => 400,
            ErrorKind::UnknownTemplate | ErrorKind::UnknownImage | ErrorKind::NotFound => 404,
            ErrorKind::AlreadyActive | ErrorKind::NamespaceExists => 409,
            ErrorKind::QuotaExceeded | ErrorKind::Unschedulable => 507,
            ErrorKind::Render | ErrorKind::Fault | ErrorKind::Internal => 500,
        }
    }

    fn from_cluster(e: ClusterError) -> Self {
        let kind = match &e {
            ClusterError::NamespaceExists(_) => ErrorKind::NamespaceExists,
            ClusterError::QuotaExceeded { .. } => ErrorKind::QuotaExceeded,
            ClusterError::Unschedulable { .. } => ErrorKind::Unschedulable,
            ClusterError::InjectedFault(_) => ErrorKind::Fault,
            ClusterError::InvalidPlan(_) => ErrorKind::Render,
            _ => ErrorKind::Internal,
        };
        Self::at(Step::Apply, kind, e.to_string())
    }
}

pub struct Meco {
    cluster: Mutex<ClusterState>,
    images: RwLock<AcfRegistry>,
    templates: RwLock<TemplateRegistry>,
    ledger: Mutex<BTreeMap<String, InstanceRecord>>,
    id_locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
    fault: Mutex<Option<Fault>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Meco {
    pub fn new(cluster: ClusterState, images: AcfRegistry, templates: TemplateRegistry) -> Self {
        Meco {
            cluster: Mutex::new(cluster),
            images: RwLock::new(images),
            templates: RwLock::new(templates),
            ledger: Mutex::new(BTreeMap::new()),
            id_locks: Mutex::new(BTreeMap::new()),
            fault: Mutex::new(None),
        }
    }

    /// Arms a failure for the next instantiation that reaches it.
    pub fn inject_fault(&self, fault: Fault) {
        *lock(&self.fault) = Some(fault);
    }

    fn take_fault_at(&self, step: Step) -> Result<(), MecoError> {
        let mut slot = lock(&self.fault);
        if *slot == Some(Fault::AtStep(step)) {
            *slot = None;
            return Err(MecoError::at(step, ErrorKind::Fault, "injected fault"));
        }
        Ok(())
    }

    fn take_apply_fault(&self) -> Option<usize> {
        let mut slot = lock(&self.fault);
        match *slot {
            Some(Fault::AtApplyObject(i)) => {
                *slot = None;
                Some(i)
            }
            _ => None,
        }
    }

    fn id_lock(&self, id: &str) -> Arc<Mutex<()>> {
        lock(&self.id_locks)
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn handle_instantiate(&self, document: &[u8]) -> Result<InstanceRecord, MecoError> {
        self.take_fault_at(Step::Parse)?;
        let descriptor = parse_mapssd(document).map_err(|e| {
            let kind = match e {
                DescriptorError::Syntax { .. } => ErrorKind::Syntax,
                DescriptorError::Schema { .. } => ErrorKind::Schema,
            };
            MecoError::at(Step::Parse, kind, e.to_string())
        })?;
        let id = descriptor.mapss_id.clone();
        let id_lock = self.id_lock(&id);
        let _guard = lock(&id_lock);

        {
            let mut ledger = lock(&self.ledger);
            if let Some(existing) = ledger.get(&id) {
                if existing.status == InstanceStatus::Active {
                    return Err(MecoError::at(
                        Step::Validate,
                        ErrorKind::AlreadyActive,
                        format!("{id} is already active"),
                    ));
                }
            }
            ledger.insert(
                id.clone(),
                InstanceRecord {
                    mapss_id: id.clone(),
                    template_id: descriptor.mapss_impl_template_id.clone(),
                    descriptor: descriptor.clone(),
                    rendered_plan: None,
                    applied_refs: vec![],
                    status: InstanceStatus::Deploying,
                    created_at_revision: 0,
                },
            );
        }

        let mut applied = false;
        let outcome = self.deploy(&descriptor, &mut applied);
        let mut ledger = lock(&self.ledger);
        let record = ledger.get_mut(&id).expect("record inserted above");
        match outcome {
            Ok((plan, refs, revision)) => {
                record.rendered_plan = Some(plan);
                record.applied_refs = refs;
                record.created_at_revision = revision;
                record.status = InstanceStatus::Active;
                log::info!("instantiated {id} at revision {revision}");
                Ok(record.clone())
            }
            Err(err) => {
                if applied {
                    if let Err(e) = lock(&self.cluster).delete_namespace_cascade(&id) {
                        log::error!("rollback of {id} failed: {e}");
                    }
                }
                record.status = InstanceStatus::Failed {
                    reason: err.to_string(),
                };
                log::warn!("instantiation of {id} failed: {err}");
                Err(err)
            }
        }
    }

    fn deploy(
        &self,
        d: &MapssDescriptor,
        applied: &mut bool,
    ) -> Result<(DeploymentPlan, Vec<ObjectRef>, u64), MecoError> {
        self.take_fault_at(Step::Validate)?;
        let report = validate_mapssd(d, &*self.images.read().expect("registry lock"));
        if !report.is_deployable() {
            let kind = if report.only_missing_images() {
                ErrorKind::UnknownImage
            } else {
                ErrorKind::Validation
            };
            return Err(MecoError::at(Step::Validate, kind, report.to_string()));
        }

        self.take_fault_at(Step::FetchTemplate)?;
        let template = self
            .templates
            .read()
            .expect("registry lock")
            .get(&d.mapss_impl_template_id)
            .cloned()
            .map_err(|e| {
                MecoError::at(
                    Step::FetchTemplate,
                    ErrorKind::UnknownTemplate,
                    e.to_string(),
                )
            })?;

        self.take_fault_at(Step::DeriveParams)?;
        let params = derive_params(d, &template)
            .map_err(|e| MecoError::at(Step::DeriveParams, ErrorKind::Param, e.to_string()))?;

        self.take_fault_at(Step::Render)?;
        let plan = render(&template, &params)
            .map_err(|e| MecoError::at(Step::Render, ErrorKind::Render, e.to_string()))?;

        self.take_fault_at(Step::Apply)?;
        let fail_at = self.take_apply_fault();
        let (refs, revision) = {
            let mut cluster = lock(&self.cluster);
            let refs = cluster
                .apply_plan_with_fault(&plan, fail_at)
                .map_err(MecoError::from_cluster)?;
            (refs, cluster.revision)
        };
        *applied = true;

        self.take_fault_at(Step::Record)?;
        Ok((plan, refs, revision))
    }

    /// Removes an instance and everything it deployed. Waits for an
    /// in-flight instantiation of the same id to settle first.
    pub fn handle_terminate(&self, mapss_id: &str) -> Result<TerminationReport, MecoError> {
        let id_lock = self.id_lock(mapss_id);
        let _guard = lock(&id_lock);
        let status = lock(&self.ledger)
            .get(mapss_id)
            .map(|r| r.status.clone())
            .ok_or_else(|| {
                MecoError::new(ErrorKind::NotFound, None, format!("{mapss_id} not found"))
            })?;
        let deleted = match status {
            InstanceStatus::Active => {
                if let Some(r) = lock(&self.ledger).get_mut(mapss_id) {
                    r.status = InstanceStatus::Terminating;
                }
                match lock(&self.cluster).delete_namespace_cascade(mapss_id) {
                    Ok(refs) => refs.len(),
                    Err(ClusterError::NotFound(_)) => 0,
                    Err(e) => return Err(MecoError::new(ErrorKind::Internal, None, e.to_string())),
                }
            }
            _ => 0,
        };
        lock(&self.ledger).remove(mapss_id);
        log::info!("terminated {mapss_id} ({deleted} objects)");
        Ok(TerminationReport {
            mapss_id: mapss_id.to_string(),
            deleted_objects: deleted,
        })
    }

    pub fn get_instance(&self, mapss_id: &str) -> Result<InstanceRecord, MecoError> {
        lock(&self.ledger).get(mapss_id).cloned().ok_or_else(|| {
            MecoError::new(ErrorKind::NotFound, None, format!("{mapss_id} not found"))
        })
    }

    pub fn list_instances(&self) -> Vec<InstanceRecord> {
        lock(&self.ledger).values().cloned().collect()
    }

    pub fn cluster_snapshot(&self) -> ClusterState {
        lock(&self.cluster).clone()
    }

    pub fn lookup_image(&self, image_ref: &str) -> Result<ImageRecord, RegistryError> {
        self.images
            .read()
            .expect("registry lock")
            .lookup(image_ref)
            .cloned()
    }

    pub fn publish_image(&self, record: ImageRecord) -> Result<String, RegistryError> {
        self.images.write().expect("registry lock").publish(record)
    }

    pub fn register_template(&self, t: DeploymentPlanTemplate) -> Result<String, TemplateError> {
        self.templates.write().expect("registry lock").register(t)
    }

    /// Namespaces that do not match an active instance, and active instances
    /// without a namespace. Empty at every quiescent point.
    pub fn coherence_violations(&self) -> Vec<String> {
        let ledger = lock(&self.ledger);
        let cluster = lock(&self.cluster);
        let mut out = Vec::new();
        for ns in cluster.namespaces.keys() {
            let active = ledger
                .get(ns)
                .is_some_and(|r| r.status == InstanceStatus::Active);
            if ns != SYSTEM_NAMESPACE && !active {
                out.push(format!("namespace {ns} has no active instance"));
            }
        }
        for (id, r) in ledger.iter() {
            if r.status == InstanceStatus::Active && !cluster.has_namespace(id) {
                out.push(format!("active instance {id} has no namespace"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::AcfDescriptor;
    use crate::test_support::testbed;
    use std::sync::Barrier;

    const TPL: &str = r##"{
        "templateId": "demoTpl",
        "parameterSchema": [
            {"name": "namespaceName", "type": "string", "required": true},
            {"name": "subnet.resources", "type": "resources", "required": true},
            {"name": "acf1.enabled", "type": "bool", "default": false},
            {"name": "acf1.image", "type": "string", "default": "acf1:1.0"},
            {"name": "acf1.qosClass", "type": "string", "default": "BestEffort"},
            {"name": "acf1.nodeSelector", "type": "string", "default": ""},
            {"name": "acf1.requests", "type": "resources", "default": {}},
            {"name": "acf1.limits", "type": "resources", "default": {}},
            {"name": "acf1.env.bufferSize", "type": "int", "default": 16}
        ],
        "objects": [
            {"kind": "ResourceQuota", "namespace": "${namespaceName}", "totals": "${subnet.resources}"},
            {"kind": "NetworkPolicy", "namespace": "${namespaceName}", "allowFromNamespaces": []},
            "#if(acf1.enabled)",
            {"kind": "Workload", "name": "acf1", "namespace": "${namespaceName}",
             "imageRef": "${acf1.image}", "qosClass": "${acf1.qosClass}",
             "nodeSelector": "${acf1.nodeSelector}",
             "env": {"BUFFER_SIZE": "${acf1.env.bufferSize}"},
             "resources": {"requests": "${acf1.requests}", "limits": "${acf1.limits}"}},
            {"kind": "Service", "namespace": "${namespaceName}", "name": "acf1-svc", "targetWorkload": "acf1"},
            "#end"
        ]
    }"##;

    fn descriptor(id: &str, cpu: u64, node: &str) -> Vec<u8> {
        format!(
            r#"{{"mapssId": "{id}", "mapssImplTemplateId": "demoTpl",
                "subnetResources": {{"cpuMillicores": 4000, "memoryMiB": 8192, "storageMiB": 102400}},
                "acfs": [{{"acfId": "acf1", "imageRef": "acf1:1.0", "qosClass": "Guaranteed",
                          "nodeSelector": "{node}",
                          "resources": {{"cpuMillicores": {cpu}, "memoryMiB": 256}},
                          "customParams": {{"bufferSize": "64"}}}}]}}"#
        )
        .into_bytes()
    }

    fn meco() -> Meco {
        let mut images = AcfRegistry::new();
        images
            .publish(ImageRecord::new(
                "acf1:1.0",
                AcfDescriptor {
                    acf_id: "acf1".into(),
                    image_ref: "acf1:1.0".into(),
                    api_spec: String::new(),
                    config_params: vec![],
                },
                1,
            ))
            .unwrap();
        let mut templates = TemplateRegistry::new();
        templates
            .register(DeploymentPlanTemplate::from_json(TPL.as_bytes()).unwrap())
            .unwrap();
        Meco::new(testbed(), images, templates)
    }

    #[test]
    fn lifecycle() {
        let m = meco();
        let rec = m
            .handle_instantiate(&descriptor("demoSlice", 1000, "kw2"))
            .unwrap();
        assert_eq!(rec.status, InstanceStatus::Active);
        assert!(!rec.applied_refs.is_empty());
        assert_eq!(rec.created_at_revision, 1);
        assert!(m.cluster_snapshot().has_namespace("demoSlice"));
        assert_eq!(m.list_instances().len(), 1);
        assert_eq!(
            m.get_instance("demoSlice").unwrap().status,
            InstanceStatus::Active
        );

        let before = m.cluster_snapshot();
        let err = m
            .handle_instantiate(&descriptor("demoSlice", 1000, "kw2"))
            .unwrap_err();
        assert_eq!(err.status(), 409);
        assert_eq!(m.cluster_snapshot(), before);

        let report = m.handle_terminate("demoSlice").unwrap();
        assert_eq!(report.deleted_objects, rec.applied_refs.len());
        assert!(!m.cluster_snapshot().has_namespace("demoSlice"));
        assert_eq!(m.get_instance("demoSlice").unwrap_err().status(), 404);
        assert_eq!(m.handle_terminate("demoSlice").unwrap_err().status(), 404);

        m.handle_instantiate(&descriptor("demoSlice", 1000, "kw2"))
            .unwrap();
        assert!(m.coherence_violations().is_empty());
    }

    #[test]
    fn status_mapping() {
        let m = meco();
        let cases: Vec<(Vec<u8>, u16, Step)> = vec![
            (b"{not json".to_vec(), 400, Step::Parse),
            (br#"{"mapssId": "x"}"#.to_vec(), 400, Step::Parse),
            (descriptor("Bad_Id", 100, "kw1"), 400, Step::Validate),
            (
                String::from_utf8(descriptor("s", 100, "kw1"))
                    .unwrap()
                    .replace("acf1:1.0", "ghost:1.0")
                    .into_bytes(),
                404,
                Step::Validate,
            ),
            (
                String::from_utf8(descriptor("s", 100, "kw1"))
                    .unwrap()
                    .replace("demoTpl", "noTpl")
                    .into_bytes(),
                404,
                Step::FetchTemplate,
            ),
            (
                String::from_utf8(descriptor("s", 100, "kw1"))
                    .unwrap()
                    .replace("bufferSize", "unknownKnob")
                    .into_bytes(),
                400,
                Step::DeriveParams,
            ),
            (descriptor("s", 3700, "kw2"), 507, Step::Apply),
            (descriptor("system", 100, "kw2"), 409, Step::Apply),
        ];
        for (doc, status, step) in cases {
            let before = m.cluster_snapshot();
            let err = m.handle_instantiate(&doc).unwrap_err();
            assert_eq!(err.status(), status, "{err}");
            assert_eq!(err.step, Some(step), "{err}");
            assert!(m.cluster_snapshot().same_contents(&before));
        }
        assert!(m.coherence_violations().is_empty());
    }

    #[test]
    fn failed_capacity_leaves_no_namespace() {
        let m = meco();
        let err = m
            .handle_instantiate(&descriptor("big", 3700, "kw2"))
            .unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unschedulable);
        assert!(!m.cluster_snapshot().has_namespace("big"));
        assert!(matches!(
            m.get_instance("big").unwrap().status,
            InstanceStatus::Failed { .. }
        ));
        // a failed record does not block a new attempt
        m.handle_instantiate(&descriptor("big", 1000, "kw2"))
            .unwrap();
    }

    #[test]
    fn faults_at_every_step_leave_no_residue() {
        let mut faults: Vec<Fault> = Step::ALL.iter().map(|s| Fault::AtStep(*s)).collect();
        faults.extend((0..4).map(Fault::AtApplyObject));
        for fault in faults {
            let m = meco();
            let pristine = m.cluster_snapshot();
            m.inject_fault(fault);
            let err = m
                .handle_instantiate(&descriptor("demoSlice", 1000, "kw2"))
                .unwrap_err();
            assert_eq!(err.kind, ErrorKind::Fault, "{fault:?}");
            assert_eq!(err.status(), 500);
            let after = m.cluster_snapshot();
            assert!(!after.has_namespace("demoSlice"), "{fault:?}");
            assert!(after.same_contents(&pristine), "{fault:?}");
            assert!(after.pods().all(|p| p.namespace != "demoSlice"));
            assert!(m.coherence_violations().is_empty());
            // the fault is one-shot
            m.handle_instantiate(&descriptor("demoSlice", 1000, "kw2"))
                .unwrap();
        }
    }

    #[test]
    fn concurrent_duplicates_yield_one_success() {
        let m = Arc::new(meco());
        let n = 8;
        let barrier = Arc::new(Barrier::new(n));
        let handles: Vec<_> = (0..n)
            .map(|_| {
                let m = m.clone();
                let b = barrier.clone();
                std::thread::spawn(move || {
                    b.wait();
                    m.handle_instantiate(&descriptor("dup", 500, "kw1"))
                        .map_err(|e| e.status())
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results
            .iter()
            .filter(|r| r.is_err())
            .all(|r| *r == Err(409)));
        assert!(m.cluster_snapshot().audit().is_empty());
    }
}

//! Bundled testbed: cluster topology, templates, ACF images, descriptors and
//! the calibrated workload.

use std::path::Path;

use anyhow::Context;
use edgeslice_core::workload_sim::WorkloadParams;
use edgeslice_core::{
    AcfRegistry, ClusterState, DeploymentPlanTemplate, MapssDescriptor, Meco, TemplateRegistry,
};

pub const CLUSTER: &str = include_str!("../assets/cluster.json");
pub const WORKLOAD: &str = include_str!("../assets/workload.json");
pub const DEMO_SLICE: &str = include_str!("../assets/descriptors/demoSlice.json");
pub const INTERFERER: &str = include_str!("../assets/descriptors/interferer.json");

const TEMPLATES: [&str; 2] = [
    include_str!("../assets/templates/demoTpl.json"),
    include_str!("../assets/templates/cpuStressTpl.json"),
];

const ACFS: [&str; 6] = [
    include_str!("../assets/acfs/cameraSimulator.json"),
    include_str!("../assets/acfs/KafkaBridge.json"),
    include_str!("../assets/acfs/KafkaBroker.json"),
    include_str!("../assets/acfs/analyticDelayMonitor.json"),
    include_str!("../assets/acfs/frameAnalytic.json"),
    include_str!("../assets/acfs/cpuStress.json"),
];

/// Orchestrator over the bundled testbed.
pub fn default_meco() -> anyhow::Result<Meco> {
    let cluster = ClusterState::from_topology_json(CLUSTER).context("bundled cluster")?;
    let mut images = AcfRegistry::new();
    for doc in ACFS {
        images
            .publish_document(doc.as_bytes())
            .context("bundled image")?;
    }
    let mut templates = TemplateRegistry::new();
    for doc in TEMPLATES {
        templates
            .register(
                DeploymentPlanTemplate::from_json(doc.as_bytes()).context("bundled template")?,
            )
            .context("bundled template")?;
    }
    Ok(Meco::new(cluster, images, templates))
}

pub fn meco_from_files(
    cluster: &Path,
    template_dir: &Path,
    acf_dir: &Path,
) -> anyhow::Result<Meco> {
    let doc = std::fs::read_to_string(cluster)
        .with_context(|| format!("reading {}", cluster.display()))?;
    let cluster = ClusterState::from_topology_json(&doc)
        .with_context(|| format!("loading {}", cluster.display()))?;
    let mut images = AcfRegistry::new();
    let n = images
        .load_dir(acf_dir)
        .with_context(|| format!("loading images from {}", acf_dir.display()))?;
    let mut templates = TemplateRegistry::new();
    let m = templates
        .load_dir(template_dir)
        .with_context(|| format!("loading templates from {}", template_dir.display()))?;
    tracing::info!(images = n, templates = m, "registries loaded");
    Ok(Meco::new(cluster, images, templates))
}

pub fn workload_params() -> WorkloadParams {
    serde_json::from_str(WORKLOAD).expect("bundled workload parses")
}

pub fn demo_slice() -> MapssDescriptor {
    edgeslice_core::parse_mapssd(DEMO_SLICE.as_bytes()).expect("bundled descriptor parses")
}

pub fn interferer() -> MapssDescriptor {
    edgeslice_core::parse_mapssd(INTERFERER.as_bytes()).expect("bundled descriptor parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_loads_and_deploys() {
        let meco = default_meco().unwrap();
        let rec = meco
            .handle_instantiate(demo_slice().to_json().as_bytes())
            .unwrap();
        let cluster = meco.cluster_snapshot();
        let ns = &cluster.namespaces["demoSlice"];
        assert_eq!(ns.pods.len(), 5);
        assert!(ns.pods.values().all(|p| p.is_running()));
        let fa = cluster.workload_pod("demoSlice", "frameAnalytic").unwrap();
        assert_eq!(fa.assigned_node.as_deref(), Some("kw2"));
        assert_eq!(fa.bandwidth.ingress_mbps, Some(120));
        assert!(!rec.applied_refs.is_empty());
        meco.handle_instantiate(interferer().to_json().as_bytes())
            .unwrap();
        let stress = meco.cluster_snapshot();
        let pod = stress.workload_pod("interferer", "cpuStress").unwrap();
        assert_eq!(pod.env["WORKERS"], "4");
        assert_eq!(pod.assigned_node.as_deref(), Some("kw2"));
    }

    #[test]
    fn bundled_dirs_match_embedded() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
        let meco = meco_from_files(
            &root.join("cluster.json"),
            &root.join("templates"),
            &root.join("acfs"),
        )
        .unwrap();
        let embedded = default_meco().unwrap();
        assert_eq!(meco.cluster_snapshot(), embedded.cluster_snapshot());
        assert_eq!(
            meco.lookup_image("frameAnalytic:1.0").unwrap(),
            embedded.lookup_image("frameAnalytic:1.0").unwrap()
        );
    }

    #[test]
    fn workload_parses() {
        let w = workload_params();
        assert_eq!(w.fps, 25.0);
        assert_eq!(w.retention_ms, 2000);
    }
}

use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::cluster::{
    BandwidthPolicyDef, ClusterObject, ClusterState, DeploymentPlan, NetworkPolicyDef, Resources,
    WorkloadDef, SYSTEM_NAMESPACE,
};
use crate::descriptors::{QosClass, ResourceSpec};
use crate::test_support::testbed;

fn workload(ns: &str, name: &str, cpu: u64, qos: QosClass, node: &str) -> ClusterObject {
    let spec = ResourceSpec::new(cpu, if cpu > 0 { 128 } else { 0 }, 0);
    let resources = match qos {
        QosClass::Guaranteed => Resources {
            requests: spec,
            limits: spec,
        },
        QosClass::BestEffort => Resources::default(),
    };
    ClusterObject::Workload(WorkloadDef {
        name: name.into(),
        namespace: ns.into(),
        image_ref: format!("{name}:1.0"),
        env: BTreeMap::new(),
        resources,
        qos_class: qos,
        node_selector: Some(node.into()),
        replicas: 1,
    })
}

fn slice_plan(ns: &str, analytic_cpu: u64, qos: QosClass, allow: &[&str]) -> DeploymentPlan {
    let mut objects = vec![
        workload(ns, "KafkaBridge", 100, QosClass::Guaranteed, "kw1"),
        workload(ns, "KafkaBroker", 100, QosClass::Guaranteed, "kw1"),
        workload(ns, "frameAnalytic", analytic_cpu, qos, "kw2"),
        ClusterObject::BandwidthPolicy(BandwidthPolicyDef {
            namespace: ns.into(),
            pod_name: "frameAnalytic".into(),
            ingress_mbps: Some(120),
            egress_mbps: Some(120),
        }),
    ];
    if !allow.is_empty() {
        objects.push(ClusterObject::NetworkPolicy(NetworkPolicyDef {
            namespace: ns.into(),
            allow_from_namespaces: allow.iter().map(|s| s.to_string()).collect(),
        }));
    }
    DeploymentPlan {
        namespace_name: ns.into(),
        objects,
        source_template_id: "t".into(),
        release_name: ns.into(),
    }
}

fn params() -> WorkloadParams {
    WorkloadParams {
        fps: 25.0,
        inter_arrival_jitter_ms: 5.0,
        frame_size_bits: Distribution::Uniform {
            low: 500_000.0,
            high: 1_500_000.0,
        },
        output_size_ratio: 0.2,
        cpu_demand_ms: Distribution::Mixture {
            light: 10.0,
            heavy: 30.0,
            heavy_prob: 0.2,
            spread: 0.2,
        },
        broker_delay_ms: 5.0,
        poll_ms: 1.0,
        retention_ms: 2000,
    }
}

fn pipeline(slice: &str, ns: &str, analytic_ns: &str, analytic: &str) -> Pipeline {
    Pipeline {
        slice_id: slice.into(),
        source: PodRef::new(ns, "KafkaBridge"),
        broker: PodRef::new(ns, "KafkaBroker"),
        analytic: PodRef::new(analytic_ns, analytic),
    }
}

fn scenario(cluster: ClusterState, pipelines: Vec<Pipeline>) -> SimScenario {
    SimScenario {
        name: "test".into(),
        seed: Some(7),
        duration_ms: 6000,
        period_ms: 100,
        cluster,
        workload: params(),
        pipelines,
        stressors: vec![],
        phases: vec![
            Phase {
                name: "I".into(),
                start_ms: 0,
                end_ms: 3000,
            },
            Phase {
                name: "II".into(),
                start_ms: 3000,
                end_ms: 6000,
            },
        ],
    }
}

fn one_slice(cpu: u64, qos: QosClass) -> SimScenario {
    let mut c = testbed();
    c.apply_plan(&slice_plan("s1", cpu, qos, &[])).unwrap();
    scenario(c, vec![pipeline("s1", "s1", "s1", "frameAnalytic")])
}

#[test]
fn same_seed_same_csv() {
    let sc = one_slice(1800, QosClass::Guaranteed);
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a, b);
    let c = run_with_seed(&sc, 8).unwrap();
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn missing_seed_rejected() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.seed = None;
    assert_eq!(run(&sc), Err(SimError::MissingSeed));
}

#[test]
fn bad_jitter_rejected() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.workload.inter_arrival_jitter_ms = 40.0;
    assert!(matches!(run(&sc), Err(SimError::Scenario(_))));
}

#[test]
fn unknown_pod_rejected() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.pipelines[0].analytic.pod = "nope".into();
    assert!(matches!(run(&sc), Err(SimError::Scenario(_))));
}

#[test]
fn zero_demand_latency_is_pure_transport() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.workload.inter_arrival_jitter_ms = 0.0;
    sc.workload.frame_size_bits = Distribution::Constant { value: 1_200_000.0 };
    sc.workload.cpu_demand_ms = Distribution::Constant { value: 0.0 };
    let r = run(&sc).unwrap();
    // broker delay 5 + poll 1 + 1.2 Mbit at 120 Mbps (10 ms)
    for f in &r.frames {
        assert_eq!(f.latency_ms, 16.0);
    }
    assert!(r.frames.len() > 100);
}

#[test]
fn counts_conserved_and_no_cpu_violations() {
    let sc = one_slice(1800, QosClass::Guaranteed);
    let r = run(&sc).unwrap();
    for s in &r.summaries {
        assert!(s.counts.conserved(), "{s:?}");
        assert!(s.counts.generated > 0);
    }
    assert!(r.cpu_violations.is_empty());
    assert_eq!(r.periods_audited, 60);
}

#[test]
fn cross_namespace_fetch_always_dropped() {
    let mut c = testbed();
    c.apply_plan(&slice_plan("s1", 1000, QosClass::Guaranteed, &[]))
        .unwrap();
    c.apply_plan(&slice_plan("s2", 1000, QosClass::Guaranteed, &[]))
        .unwrap();
    let sc = scenario(c, vec![pipeline("x", "s1", "s2", "frameAnalytic")]);
    let r = run(&sc).unwrap();
    assert!(r.frames.is_empty());
    for s in &r.summaries {
        assert_eq!(s.counts.sampled, 0);
        assert_eq!(s.counts.dropped + s.counts.in_flight, s.counts.generated);
    }
}

#[test]
fn allowed_and_system_namespaces_reach_broker() {
    let mut c = testbed();
    c.apply_plan(&slice_plan("s1", 1000, QosClass::Guaranteed, &["s2"]))
        .unwrap();
    c.apply_plan(&slice_plan("s2", 1000, QosClass::Guaranteed, &[]))
        .unwrap();
    let sc = scenario(
        c,
        vec![
            pipeline("allowed", "s1", "s2", "frameAnalytic"),
            pipeline("sys", "s2", SYSTEM_NAMESPACE, "metricsCollector"),
        ],
    );
    let r = run(&sc).unwrap();
    for s in &r.summaries {
        assert!(s.counts.sampled > 0, "{s:?}");
    }
}

#[test]
fn latency_at_least_processing_time() {
    let sc = one_slice(1800, QosClass::Guaranteed);
    let r = run(&sc).unwrap();
    for f in &r.frames {
        assert!(f.latency_ms + 1e-3 >= f.cpu_demand_ms + 5.0 + 1.0, "{f:?}");
    }
}

#[test]
fn starved_quota_inflates_latency() {
    let fast = run(&one_slice(1800, QosClass::Guaranteed)).unwrap();
    let slow = run(&one_slice(300, QosClass::Guaranteed)).unwrap();
    let m = |r: &MetricsReport| r.summary("s1", "I").unwrap().mean_ms;
    assert!(m(&slow) > 2.0 * m(&fast), "{} vs {}", m(&slow), m(&fast));
    assert!(slow.cpu_violations.is_empty());
}

#[test]
fn stressor_hurts_best_effort_not_guaranteed() {
    let mut c = testbed();
    c.apply_plan(&slice_plan("s1", 1800, QosClass::Guaranteed, &[]))
        .unwrap();
    c.apply_plan(&slice_plan("s2", 0, QosClass::BestEffort, &[]))
        .unwrap();
    let mut stress = slice_plan("hog", 0, QosClass::BestEffort, &[]);
    stress.objects = vec![workload("hog", "cpuStress", 0, QosClass::BestEffort, "kw2")];
    if let ClusterObject::Workload(w) = &mut stress.objects[0] {
        w.env.insert("WORKERS".into(), "4".into());
    }
    c.apply_plan(&stress).unwrap();
    let mut sc = scenario(
        c,
        vec![
            pipeline("s1", "s1", "s1", "frameAnalytic"),
            pipeline("s2", "s2", "s2", "frameAnalytic"),
        ],
    );
    sc.stressors.push(Stressor {
        pod: PodRef::new("hog", "cpuStress"),
        active_from_ms: 3000,
        active_until_ms: 6000,
    });
    let r = run(&sc).unwrap();
    let m = |s: &str, p: &str| r.summary(s, p).unwrap().mean_ms;
    assert!(
        m("s2", "II") > 2.0 * m("s2", "I"),
        "{} {}",
        m("s2", "I"),
        m("s2", "II")
    );
    assert!(
        m("s1", "II") < 1.1 * m("s1", "I"),
        "{} {}",
        m("s1", "I"),
        m("s1", "II")
    );
    assert!(r.cpu_violations.is_empty(), "{:?}", r.cpu_violations);
}

#[test]
fn scenario_json_roundtrip() {
    let sc = one_slice(1800, QosClass::Guaranteed);
    let doc = serde_json::to_string(&sc).unwrap();
    assert_eq!(SimScenario::from_json(&doc).unwrap(), sc);
    assert!(matches!(
        SimScenario::from_json(r#"{"name": 3}"#),
        Err(SimError::Scenario(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_runs_hold_invariants(
        seed in any::<u64>(),
        cpu in 200u64..2000,
        best_effort in any::<bool>(),
        demand in 1.0f64..40.0,
        bits in 100_000.0f64..3_000_000.0,
    ) {
        let qos = if best_effort { QosClass::BestEffort } else { QosClass::Guaranteed };
        let mut sc = one_slice(if best_effort { 0 } else { cpu }, qos);
        sc.duration_ms = 2000;
        sc.phases.clear();
        sc.workload.cpu_demand_ms = Distribution::Uniform { low: demand / 2.0, high: demand };
        sc.workload.frame_size_bits = Distribution::Constant { value: bits };
        let r = run_with_seed(&sc, seed).unwrap();
        prop_assert!(r.cpu_violations.is_empty());
        for s in &r.summaries {
            prop_assert!(s.counts.conserved());
        }
        for f in &r.frames {
            prop_assert!(f.latency_ms + 1e-3 >= f.cpu_demand_ms + 6.0);
        }
        prop_assert_eq!(r.to_csv(), run_with_seed(&sc, seed).unwrap().to_csv());
    }
}

fn with_analytic_limits(cpu: u64, mbps: u64) -> SimScenario {
    let mut c = testbed();
    let mut plan = slice_plan("s1", cpu, QosClass::Guaranteed, &[]);
    for o in &mut plan.objects {
        if let ClusterObject::BandwidthPolicy(b) = o {
            b.ingress_mbps = Some(mbps);
            b.egress_mbps = Some(mbps);
        }
    }
    c.apply_plan(&plan).unwrap();
    let mut sc = scenario(c, vec![pipeline("s1", "s1", "s1", "frameAnalytic")]);
    sc.duration_ms = 3000;
    sc.phases.clear();
    sc
}

#[test]
fn fps_does_not_change_uncontended_latency() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.workload.inter_arrival_jitter_ms = 0.0;
    sc.workload.cpu_demand_ms = Distribution::Constant { value: 8.0 };
    sc.workload.frame_size_bits = Distribution::Constant { value: 600_000.0 };
    let mut means = Vec::new();
    for fps in [5.0, 10.0, 25.0] {
        sc.workload.fps = fps;
        let r = run(&sc).unwrap();
        means.push(r.summary("s1", "I").unwrap().mean_ms);
    }
    for m in &means {
        assert!((m - means[0]).abs() < 1e-9, "{means:?}");
    }
}

#[test]
fn empty_report_csv_is_header_only() {
    let mut sc = one_slice(1800, QosClass::Guaranteed);
    sc.pipelines.clear();
    assert_eq!(
        run(&sc).unwrap().to_csv(),
        "frameId,sliceId,phase,latencyMs\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tighter_limits_never_speed_up_a_frame(
        seed in any::<u64>(),
        cpu in 400u64..1800,
        cpu_cut in 0u64..300,
        mbps in 40u64..200,
        mbps_cut in 0u64..30,
    ) {
        let loose = run_with_seed(&with_analytic_limits(cpu, mbps), seed).unwrap();
        let tight = run_with_seed(&with_analytic_limits(cpu - cpu_cut, mbps - mbps_cut), seed).unwrap();
        let slow: BTreeMap<u64, f64> =
            tight.frames.iter().map(|f| (f.frame_id, f.latency_ms)).collect();
        for f in &loose.frames {
            if let Some(l) = slow.get(&f.frame_id) {
                prop_assert!(*l + 1e-3 >= f.latency_ms, "frame {}: {} < {}", f.frame_id, l, f.latency_ms);
            }
        }
    }
}

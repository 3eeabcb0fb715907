//! The four latency experiments, driven only through the HTTP API.
//!
//! Each configuration is deployed with POSTs, the resulting cluster is read
//! back from the state endpoint and simulated once per seed, then torn down
//! with DELETEs.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context};
use edgeslice_core::workload_sim::{
    self, MetricsReport, Phase, Pipeline, PodRef, SimScenario, Stressor, WorkloadParams,
};
use edgeslice_core::{ClusterState, MapssDescriptor, QosClass, ResourceSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::assets;
use crate::client::MecoClient;
use crate::server::BackgroundServer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Isolation,
    Bandwidth,
    Cpu,
    Sharing,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Isolation => "isolation",
            ExperimentKind::Bandwidth => "bandwidth",
            ExperimentKind::Cpu => "cpu",
            ExperimentKind::Sharing => "sharing",
        }
    }
}

pub const BANDWIDTH_RATES_MBPS: [u64; 3] = [30, 60, 120];
pub const CPU_QUOTAS_MC: [u64; 3] = [500, 1000, 1800];
pub const SHARING_LIMITS_MC: [u64; 2] = [3600, 2000];

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub phase_ms: u64,
    pub seeds: Vec<u64>,
    pub parallel: bool,
    pub workload: WorkloadParams,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            phase_ms: 60_000,
            seeds: (1..=5).collect(),
            parallel: false,
            workload: assets::workload_params(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Predicate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Predicate {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Predicate {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Seed-averaged statistics of one slice in one phase of one configuration.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Cell {
    pub config: String,
    pub slice: String,
    pub phase: String,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub p95_ms: f64,
    pub throughput_fps: f64,
    pub dropped: u64,
    pub per_seed_mean_ms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentOutcome {
    pub kind: ExperimentKind,
    pub phase_ms: u64,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub predicates: Vec<Predicate>,
    pub cpu_violations: usize,
    pub wall_ms: u128,
    #[serde(skip)]
    pub reports: Vec<(String, MetricsReport)>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.predicates.iter().all(|p| p.passed)
    }

    pub fn cell(&self, config: &str, slice: &str, phase: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.config == config && c.slice == slice && c.phase == phase)
    }

    /// Markdown table of mean latencies: configurations × phases as rows,
    /// slices as columns.
    pub fn table(&self) -> String {
        let mut slices: Vec<&str> = self.cells.iter().map(|c| c.slice.as_str()).collect();
        slices.dedup();
        slices.sort();
        slices.dedup();
        let mut rows: Vec<(&str, &str)> = Vec::new();
        for c in &self.cells {
            if !rows.contains(&(c.config.as_str(), c.phase.as_str())) {
                rows.push((c.config.as_str(), c.phase.as_str()));
            }
        }
        let mut out = String::new();
        let _ = write!(out, "| config | phase |");
        for s in &slices {
            let _ = write!(out, " {s} mean (ms) | {s} stddev (ms) |");
        }
        out.push('\n');
        out.push_str("|---|---|");
        for _ in &slices {
            out.push_str("---:|---:|");
        }
        out.push('\n');
        for (config, phase) in rows {
            let _ = write!(out, "| {config} | {phase} |");
            for s in &slices {
                match self.cell(config, s, phase) {
                    Some(c) => {
                        let _ = write!(out, " {:.2} | {:.2} |", c.mean_ms, c.stddev_ms);
                    }
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn predicate_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.predicates {
            let _ = writeln!(
                out,
                "{} {}: {}",
                if p.passed { "PASS" } else { "FAIL" },
                p.name,
                p.detail
            );
        }
        out
    }

    /// Writes per-seed CSVs, `summary.json` and `table.md` into `dir`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (label, report) in &self.reports {
            let path = dir.join(format!("{label}.csv"));
            std::fs::write(&path, report.to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
        }
        let summary = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("summary.json"), summary)?;
        let md = format!(
            "# {} experiment\n\n{}\n{}",
            self.kind.as_str(),
            self.table(),
            self.predicate_lines()
        );
        std::fs::write(dir.join("table.md"), md)?;
        Ok(())
    }
}

/// Starts a private server over the bundled testbed and runs `spec` against it.
pub fn run_local(spec: &ExperimentSpec) -> anyhow::Result<ExperimentOutcome> {
    let server = BackgroundServer::start(Arc::new(assets::default_meco()?))?;
    let client = MecoClient::new(server.base_url());
    run(spec, &client)
}

pub fn run(spec: &ExperimentSpec, client: &MecoClient) -> anyhow::Result<ExperimentOutcome> {
    ensure!(!spec.seeds.is_empty(), "at least one seed is required");
    ensure!(spec.phase_ms > 0, "phase length must be positive");
    let start = Instant::now();
    let mut runner = Runner {
        spec,
        client,
        cells: Vec::new(),
        reports: Vec::new(),
        predicates: Vec::new(),
    };
    match spec.kind {
        ExperimentKind::Isolation => runner.isolation()?,
        ExperimentKind::Bandwidth => runner.bandwidth()?,
        ExperimentKind::Cpu => runner.cpu()?,
        ExperimentKind::Sharing => runner.sharing()?,
    }
    let cpu_violations = runner
        .reports
        .iter()
        .map(|(_, r)| r.cpu_violations.len())
        .sum();
    runner.predicates.push(Predicate::new(
        "cpu accounting",
        cpu_violations == 0,
        format!("{cpu_violations} quota/budget violations across all periods"),
    ));
    let wall = start.elapsed();
    if spec.kind == ExperimentKind::Isolation {
        runner.predicates.push(Predicate::new(
            "runtime",
            wall <= Duration::from_secs(120),
            format!("{:.1} s wall clock (limit 120 s)", wall.as_secs_f64()),
        ));
    }
    Ok(ExperimentOutcome {
        kind: spec.kind,
        phase_ms: spec.phase_ms,
        seeds: spec.seeds.clone(),
        cells: runner.cells,
        predicates: runner.predicates,
        cpu_violations,
        wall_ms: wall.as_millis(),
        reports: runner.reports,
    })
}

/// Frames flow camera → bridge → broker → analytic of `slice`, with the
/// analytic possibly living in another namespace.
fn pipeline(slice: &str, analytic_ns: &str) -> Pipeline {
    Pipeline {
        slice_id: slice.into(),
        source: PodRef::new(slice, "KafkaBridge"),
        broker: PodRef::new(slice, "KafkaBroker"),
        analytic: PodRef::new(analytic_ns, "frameAnalytic"),
    }
}

fn slice_descriptor(id: &str, qos: QosClass) -> MapssDescriptor {
    let mut d = assets::demo_slice();
    d.mapss_id = id.into();
    for a in &mut d.acfs {
        a.qos_class = qos;
    }
    d
}

fn set_analytic(d: &mut MapssDescriptor, f: impl FnOnce(&mut edgeslice_core::AcfSpec)) {
    let a = d
        .acfs
        .iter_mut()
        .find(|a| a.acf_id == "frameAnalytic")
        .expect("descriptor has frameAnalytic");
    f(a);
}

fn set_analytic_cpu(d: &mut MapssDescriptor, mc: u64) {
    set_analytic(d, |a| {
        let r = a.resources.get_or_insert(ResourceSpec::ZERO);
        r.cpu_millicores = mc;
    });
}

fn set_link_rate(d: &mut MapssDescriptor, mbps: u64) {
    for l in &mut d.virtual_links {
        if l.from == "KafkaBridge" && l.to == "frameAnalytic" {
            l.max_bandwidth_mbps = mbps;
        }
    }
}

fn drop_analytic(d: &mut MapssDescriptor) {
    d.acfs.retain(|a| a.acf_id != "frameAnalytic");
    d.virtual_links
        .retain(|l| l.from != "frameAnalytic" && l.to != "frameAnalytic");
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    client: &'a MecoClient,
    cells: Vec<Cell>,
    reports: Vec<(String, MetricsReport)>,
    predicates: Vec<Predicate>,
}

impl Runner<'_> {
    fn deploy(&self, d: &MapssDescriptor) -> anyhow::Result<()> {
        let r = self.client.instantiate(d)?;
        if r.status != 201 {
            bail!(
                "deploying {} failed with {}: {}",
                d.mapss_id,
                r.status,
                r.body
            );
        }
        Ok(())
    }

    fn remove(&self, id: &str) -> anyhow::Result<()> {
        let r = self.client.terminate(id)?;
        if r.status != 204 {
            bail!("removing {id} failed with {}: {}", r.status, r.body);
        }
        Ok(())
    }

    fn scenario(
        &self,
        name: &str,
        cluster: ClusterState,
        pipelines: Vec<Pipeline>,
        phases: &[&str],
    ) -> SimScenario {
        let t = self.spec.phase_ms;
        SimScenario {
            name: name.into(),
            seed: None,
            duration_ms: t * phases.len() as u64,
            period_ms: 100,
            cluster,
            workload: self.spec.workload.clone(),
            pipelines,
            stressors: vec![],
            phases: phases
                .iter()
                .enumerate()
                .map(|(i, p)| Phase {
                    name: (*p).into(),
                    start_ms: t * i as u64,
                    end_ms: t * (i as u64 + 1),
                })
                .collect(),
        }
    }

    /// Simulates `sc` for every seed and records seed-averaged cells.
    fn simulate(&mut self, config: &str, sc: &SimScenario) -> anyhow::Result<()> {
        let run = |seed: &u64| {
            let mut s = sc.clone();
            s.seed = Some(*seed);
            workload_sim::run(&s).map(|r| (*seed, r))
        };
        let results: Vec<(u64, MetricsReport)> = if self.spec.parallel {
            self.spec
                .seeds
                .par_iter()
                .map(run)
                .collect::<Result<_, _>>()?
        } else {
            self.spec.seeds.iter().map(run).collect::<Result<_, _>>()?
        };
        let keys: Vec<(String, String)> = results[0]
            .1
            .summaries
            .iter()
            .map(|s| (s.slice_id.clone(), s.phase.clone()))
            .collect();
        for (slice, phase) in keys {
            let sums: Vec<_> = results
                .iter()
                .filter_map(|(_, r)| r.summary(&slice, &phase))
                .collect();
            let n = sums.len() as f64;
            let avg = |f: &dyn Fn(&workload_sim::PhaseSummary) -> f64| {
                sums.iter().map(|s| f(s)).sum::<f64>() / n
            };
            self.cells.push(Cell {
                config: config.into(),
                slice: slice.clone(),
                phase: phase.clone(),
                mean_ms: avg(&|s| s.mean_ms),
                stddev_ms: avg(&|s| s.stddev_ms),
                p95_ms: avg(&|s| s.p95_ms),
                throughput_fps: avg(&|s| s.throughput_fps),
                dropped: sums.iter().map(|s| s.counts.dropped).sum(),
                per_seed_mean_ms: sums.iter().map(|s| s.mean_ms).collect(),
            });
        }
        for (seed, r) in results {
            self.reports.push((format!("{config}_seed{seed}"), r));
        }
        Ok(())
    }

    fn mean(&self, config: &str, slice: &str, phase: &str) -> f64 {
        self.cell(config, slice, phase)
            .map_or(f64::NAN, |c| c.mean_ms)
    }

    fn stddev(&self, config: &str, slice: &str, phase: &str) -> f64 {
        self.cell(config, slice, phase)
            .map_or(f64::NAN, |c| c.stddev_ms)
    }

    fn cell(&self, config: &str, slice: &str, phase: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.config == config && c.slice == slice && c.phase == phase)
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.predicates.push(Predicate::new(name, passed, detail));
    }

    fn isolation(&mut self) -> anyhow::Result<()> {
        let t = self.spec.phase_ms;
        let phases = ["I", "II", "III"];
        self.deploy(&slice_descriptor("slice1", QosClass::Guaranteed))?;
        self.deploy(&slice_descriptor("slice2", QosClass::BestEffort))?;
        let before = self.client.cluster_state()?;

        // a Guaranteed interferer cannot fit next to slice1's reservation
        let mut big = assets::interferer();
        big.acfs[0].qos_class = QosClass::Guaranteed;
        big.acfs[0].resources = Some(ResourceSpec::new(2000, 256, 0));
        let rejected = self.client.instantiate(&big)?;
        let untouched = self.client.cluster_state()?.same_contents(&before);
        self.check(
            "guaranteed interferer rejected",
            rejected.status == 507 && untouched,
            format!("status {}, cluster unchanged: {untouched}", rejected.status),
        );
        let quiet = self.scenario(
            "isolation-guaranteed-interferer",
            before.clone(),
            vec![pipeline("slice1", "slice1"), pipeline("slice2", "slice2")],
            &phases,
        );
        self.simulate("rejected", &quiet)?;

        self.deploy(&assets::interferer())?;
        let during = self.client.cluster_state()?;
        self.remove("interferer")?;
        let after = self.client.cluster_state()?;
        self.check(
            "interferer removal restores cluster",
            after.same_contents(&before),
            format!("revision {} -> {}", before.revision, after.revision),
        );
        let mut sc = self.scenario(
            "isolation",
            during,
            vec![pipeline("slice1", "slice1"), pipeline("slice2", "slice2")],
            &phases,
        );
        sc.stressors.push(Stressor {
            pod: PodRef::new("interferer", "cpuStress"),
            active_from_ms: t,
            active_until_ms: 2 * t,
        });
        self.simulate("stress", &sc)?;
        self.remove("slice1")?;
        self.remove("slice2")?;

        let base = self.mean("stress", "slice1", "I");
        self.check(
            "baseline latency",
            (base - 26.0).abs() <= 3.0,
            format!("slice1 phase I mean {base:.2} ms (target 26 ± 3)"),
        );
        let s2 = self.mean("stress", "slice2", "II") / self.mean("stress", "slice2", "I");
        self.check(
            "best-effort slice degraded",
            s2 >= 2.5,
            format!("slice2 II/I = {s2:.2} (need >= 2.5)"),
        );
        let s1 = self.mean("stress", "slice1", "II") / self.mean("stress", "slice1", "I") - 1.0;
        self.check(
            "guaranteed slice isolated",
            s1 <= 0.10,
            format!("slice1 II vs I {:+.1}% (need <= +10%)", s1 * 100.0),
        );
        let mut worst: f64 = 0.0;
        for slice in ["slice1", "slice2"] {
            let i = self.mean("rejected", slice, "I");
            for p in ["II", "III"] {
                worst = worst.max((self.mean("rejected", slice, p) / i - 1.0).abs());
            }
        }
        self.check(
            "phases unchanged without interferer",
            worst <= 0.05,
            format!("largest phase deviation {:.1}% (limit 5%)", worst * 100.0),
        );
        Ok(())
    }

    fn bandwidth(&mut self) -> anyhow::Result<()> {
        for rate in BANDWIDTH_RATES_MBPS {
            let mut d = slice_descriptor("slice1", QosClass::Guaranteed);
            set_link_rate(&mut d, rate);
            self.deploy(&d)?;
            let c = self.client.cluster_state()?;
            let sc = self.scenario(
                &format!("bandwidth-{rate}"),
                c,
                vec![pipeline("slice1", "slice1")],
                &["run"],
            );
            self.simulate(&format!("{rate}Mbps"), &sc)?;
            self.remove("slice1")?;
        }
        let m = |r: &Self, rate: u64| r.mean(&format!("{rate}Mbps"), "slice1", "run");
        let sd = |r: &Self, rate: u64| r.stddev(&format!("{rate}Mbps"), "slice1", "run");
        let inc60 = m(self, 60) / m(self, 120) - 1.0;
        let inc30 = m(self, 30) / m(self, 120) - 1.0;
        self.check(
            "halved rate",
            (0.40..=0.90).contains(&inc60),
            format!("60 vs 120 Mbps {:+.1}% (need +40..+90%)", inc60 * 100.0),
        );
        self.check(
            "quartered rate",
            inc30 >= 1.5,
            format!("30 vs 120 Mbps {:+.1}% (need >= +150%)", inc30 * 100.0),
        );
        let (a, b, c) = (sd(self, 30), sd(self, 60), sd(self, 120));
        self.check(
            "variability falls with rate",
            a > b && b > c,
            format!("stddev 30/60/120 = {a:.2}/{b:.2}/{c:.2} ms"),
        );
        Ok(())
    }

    fn cpu(&mut self) -> anyhow::Result<()> {
        for q in CPU_QUOTAS_MC {
            let mut d = slice_descriptor("slice1", QosClass::Guaranteed);
            set_analytic_cpu(&mut d, q);
            self.deploy(&d)?;
            let c = self.client.cluster_state()?;
            let sc = self.scenario(
                &format!("cpu-{q}"),
                c,
                vec![pipeline("slice1", "slice1")],
                &["run"],
            );
            self.simulate(&format!("{q}mc"), &sc)?;
            self.remove("slice1")?;
        }
        let m = |r: &Self, q: u64| r.mean(&format!("{q}mc"), "slice1", "run");
        let sd = |r: &Self, q: u64| r.stddev(&format!("{q}mc"), "slice1", "run");
        let r1000 = m(self, 1000) / m(self, 1800) - 1.0;
        let r500 = m(self, 500) / m(self, 1800);
        self.check(
            "one core is enough",
            r1000.abs() <= 0.15,
            format!("1000 vs 1800 mc {:+.1}% (limit 15%)", r1000 * 100.0),
        );
        self.check(
            "half core throttles",
            r500 >= 3.0,
            format!("500 / 1800 mc = {r500:.2}x (need >= 3x)"),
        );
        let (a, b) = (sd(self, 500), sd(self, 1800));
        self.check(
            "throttling adds variability",
            a > b,
            format!("stddev 500/1800 = {a:.2}/{b:.2} ms"),
        );
        Ok(())
    }

    fn sharing(&mut self) -> anyhow::Result<()> {
        for c in SHARING_LIMITS_MC {
            let mut s1 = slice_descriptor("slice1", QosClass::Guaranteed);
            let mut s2 = slice_descriptor("slice2", QosClass::Guaranteed);
            set_analytic_cpu(&mut s1, c / 2);
            set_analytic_cpu(&mut s2, c / 2);
            self.deploy(&s1)?;
            self.deploy(&s2)?;
            let cluster = self.client.cluster_state()?;
            let sc = self.scenario(
                &format!("split-{c}"),
                cluster,
                vec![pipeline("slice1", "slice1"), pipeline("slice2", "slice2")],
                &["run"],
            );
            self.simulate(&format!("split-{c}mc"), &sc)?;
            self.remove("slice1")?;
            self.remove("slice2")?;

            let mut shared = assets::demo_slice();
            shared.mapss_id = "slice3".into();
            shared.acfs.retain(|a| a.acf_id == "frameAnalytic");
            shared.virtual_links.clear();
            shared.subnet_resources = ResourceSpec::new(c, 1024, 1024);
            set_analytic_cpu(&mut shared, c);
            set_analytic(&mut shared, |a| {
                a.custom_params.insert("workers".into(), "2".into());
            });
            let (mut s1, mut s2) = (s1, s2);
            for s in [&mut s1, &mut s2] {
                drop_analytic(s);
                for a in &mut s.acfs {
                    if a.acf_id == "KafkaBroker" {
                        a.custom_params.insert("allowFrom".into(), "slice3".into());
                    }
                }
            }
            self.deploy(&s1)?;
            self.deploy(&s2)?;
            self.deploy(&shared)?;
            let cluster = self.client.cluster_state()?;
            let sc = self.scenario(
                &format!("shared-{c}"),
                cluster,
                vec![pipeline("slice1", "slice3"), pipeline("slice2", "slice3")],
                &["run"],
            );
            self.simulate(&format!("shared-{c}mc"), &sc)?;
            for id in ["slice3", "slice1", "slice2"] {
                self.remove(id)?;
            }
        }

        let avg = |r: &Self, cfg: &str| {
            (r.mean(cfg, "slice1", "run") + r.mean(cfg, "slice2", "run")) / 2.0
        };
        let mut worst_gap: f64 = 0.0;
        for c in SHARING_LIMITS_MC {
            let split = avg(self, &format!("split-{c}mc"));
            let shared = avg(self, &format!("shared-{c}mc"));
            let gain = 1.0 - shared / split;
            self.check(
                &format!("sharing helps at {c} mc"),
                shared < split && (0.05..=0.30).contains(&gain),
                format!(
                    "split {split:.2} ms, shared {shared:.2} ms, improvement {:.1}% (need 5..30%)",
                    gain * 100.0
                ),
            );
            for cfg in [format!("split-{c}mc"), format!("shared-{c}mc")] {
                let (a, b) = (
                    self.mean(&cfg, "slice1", "run"),
                    self.mean(&cfg, "slice2", "run"),
                );
                worst_gap = worst_gap.max((a - b).abs() / ((a + b) / 2.0));
            }
        }
        self.check(
            "slices treated alike",
            worst_gap <= 0.03,
            format!(
                "largest slice1/slice2 gap {:.2}% (limit 3%)",
                worst_gap * 100.0
            ),
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            phase_ms: 4000,
            seeds: vec![1, 2],
            ..ExperimentSpec::new(kind)
        }
    }

    #[test]
    fn every_experiment_runs_and_cleans_up() {
        let server = BackgroundServer::start(Arc::new(assets::default_meco().unwrap())).unwrap();
        let client = MecoClient::new(server.base_url());
        let empty = client.cluster_state().unwrap();
        for kind in [
            ExperimentKind::Isolation,
            ExperimentKind::Bandwidth,
            ExperimentKind::Cpu,
            ExperimentKind::Sharing,
        ] {
            let out = run(&quick(kind), &client).unwrap();
            assert!(!out.cells.is_empty());
            assert_eq!(out.cpu_violations, 0);
            assert!(
                client.cluster_state().unwrap().same_contents(&empty),
                "{kind:?}"
            );
            assert_eq!(client.list().unwrap().body, serde_json::json!([]));
        }
    }

    #[test]
    fn isolation_table_has_six_cells() {
        let out = run_local(&quick(ExperimentKind::Isolation)).unwrap();
        let stress: Vec<_> = out.cells.iter().filter(|c| c.config == "stress").collect();
        assert_eq!(stress.len(), 6);
        let table = out.table();
        assert!(table.contains("| stress | II |"));
        assert_eq!(table, out.table());
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir_a = std::env::temp_dir().join(format!("edgeslice-a-{}", std::process::id()));
        let dir_b = std::env::temp_dir().join(format!("edgeslice-b-{}", std::process::id()));
        let spec = quick(ExperimentKind::Cpu);
        run_local(&spec).unwrap().write(&dir_a).unwrap();
        let mut par = spec.clone();
        par.parallel = true;
        run_local(&par).unwrap().write(&dir_b).unwrap();
        for name in ["1800mc_seed1.csv", "500mc_seed2.csv", "table.md"] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let _ = std::fs::remove_dir_all(dir_a);
        let _ = std::fs::remove_dir_all(dir_b);
    }

    #[test]
    fn empty_seed_list_rejected() {
        let mut spec = quick(ExperimentKind::Cpu);
        spec.seeds.clear();
        assert!(run_local(&spec).is_err());
    }
}

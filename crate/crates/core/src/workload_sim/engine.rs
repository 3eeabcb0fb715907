//! Discrete-event core. Time is integer microseconds; events at the same
//! instant run in the order they were scheduled.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cpu::{cpu_grant, CpuClaim};
use super::link::{Endpoint, LinkModel};
use super::metrics::{summarize, CpuViolation, FrameCounts, FrameRecord, MetricsReport};
use super::scenario::{PodRef, SimScenario};
use super::topic::{consume_from_topic, TopicQueue};
use super::SimError;
use crate::cluster::{effective_rate_limit, ClusterState, Direction, PodInstance};
use crate::descriptors::QosClass;

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Boundary,
    Generate(usize),
    Visible(usize),
    FetchStart(usize),
    FetchDone(usize),
    CpuCheck(usize, u64),
    PublishDone(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    InFlight,
    Sampled,
    Dropped,
}

struct Frame {
    id: u64,
    stream: usize,
    t1: u64,
    t2: u64,
    size_bits: u64,
    demand_us: f64,
    queue_wait_us: u64,
    throttle_us: u64,
    fate: Fate,
}

/// A source, its topic and the consumer loop serving it.
struct Stream {
    slice: String,
    src: usize,
    broker: usize,
    analytic: usize,
    pod: usize,
    rng: ChaCha8Rng,
    offset_us: u64,
    next_k: u64,
    topic: TopicQueue<usize>,
    busy: bool,
    /// Demand of frames visible at the broker or being fetched.
    queued_us: f64,
}

struct Job {
    frame: usize,
    remaining_us: f64,
    throttled_since: Option<u64>,
}

struct CpuPod {
    key: String,
    node: usize,
    qos: QosClass,
    quota_us: Option<f64>,
    reservation_us: f64,
    workers: f64,
    allowance_us: f64,
    used_us: f64,
    jobs: Vec<Job>,
    last_us: u64,
    version: u64,
    throttled: bool,
    stressor: Option<(u64, u64)>,
    stressing: bool,
    streams: Vec<usize>,
}

struct CpuNode {
    name: String,
    budget_us: f64,
    pool_us: f64,
    pods: Vec<usize>,
}

struct Sim<'a> {
    sc: &'a SimScenario,
    cluster: &'a ClusterState,
    duration_us: u64,
    period_us: u64,
    interval_us: u64,
    jitter_us: u64,
    poll_us: u64,
    broker_delay_us: u64,
    heap: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    seq: u64,
    pods_k8s: Vec<PodInstance>,
    endpoints: Vec<Endpoint>,
    links: LinkModel,
    frames: Vec<Frame>,
    streams: Vec<Stream>,
    cpu: Vec<CpuPod>,
    nodes: Vec<CpuNode>,
    violations: Vec<CpuViolation>,
    periods_audited: u64,
}

fn resolve<'c>(cluster: &'c ClusterState, r: &PodRef) -> Result<&'c PodInstance, SimError> {
    let pod = cluster
        .pod(&r.namespace, &r.pod)
        .or_else(|| cluster.workload_pod(&r.namespace, &r.pod))
        .ok_or_else(|| SimError::Scenario(format!("pod {}/{} not found", r.namespace, r.pod)))?;
    if !pod.is_running() || pod.assigned_node.is_none() {
        return Err(SimError::Scenario(format!(
            "pod {}/{} is not running",
            r.namespace, r.pod
        )));
    }
    Ok(pod)
}

fn pod_key(p: &PodInstance) -> String {
    format!("{}/{}", p.namespace, p.pod_id)
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round().max(0.0) as u64
}

pub(crate) fn simulate(sc: &SimScenario, seed: u64) -> Result<MetricsReport, SimError> {
    let mut sim = Sim::new(sc, seed)?;
    sim.run();
    Ok(sim.finish(seed))
}

impl<'a> Sim<'a> {
    fn new(sc: &'a SimScenario, seed: u64) -> Result<Self, SimError> {
        let w = &sc.workload;
        if sc.duration_ms == 0 || sc.period_ms == 0 {
            return Err(SimError::Scenario(
                "duration and period must be positive".into(),
            ));
        }
        if !(w.fps > 0.0 && w.fps.is_finite()) {
            return Err(SimError::Scenario(format!(
                "fps must be positive, got {}",
                w.fps
            )));
        }
        let interval_us = (1e6 / w.fps).round() as u64;
        let jitter_us = ms_to_us(w.inter_arrival_jitter_ms);
        if interval_us == 0 || jitter_us >= interval_us {
            return Err(SimError::Scenario(
                "inter-arrival jitter must be below the frame interval".into(),
            ));
        }
        if w.retention_ms == 0 || w.output_size_ratio < 0.0 {
            return Err(SimError::Scenario(
                "invalid retention or output ratio".into(),
            ));
        }
        for p in &sc.phases {
            if p.end_ms <= p.start_ms {
                return Err(SimError::Scenario(format!("phase {} is empty", p.name)));
            }
        }

        let mut sim = Sim {
            sc,
            cluster: &sc.cluster,
            duration_us: sc.duration_ms * 1000,
            period_us: sc.period_ms * 1000,
            interval_us,
            jitter_us,
            poll_us: ms_to_us(w.poll_ms),
            broker_delay_us: ms_to_us(w.broker_delay_ms),
            heap: BinaryHeap::new(),
            seq: 0,
            pods_k8s: Vec::new(),
            endpoints: Vec::new(),
            links: LinkModel::new(),
            frames: Vec::new(),
            streams: Vec::new(),
            cpu: Vec::new(),
            nodes: Vec::new(),
            violations: Vec::new(),
            periods_audited: 0,
        };

        for s in &sc.stressors {
            let pod = resolve(sim.cluster, &s.pod)?.clone();
            let c = sim.cpu_pod(&pod);
            if sim.cpu[c].stressor.is_some() {
                return Err(SimError::Scenario(format!(
                    "pod {} stressed twice",
                    sim.cpu[c].key
                )));
            }
            sim.cpu[c].stressor = Some((s.active_from_ms * 1000, s.active_until_ms * 1000));
        }

        for (i, p) in sc.pipelines.iter().enumerate() {
            let src = resolve(sim.cluster, &p.source)?.clone();
            let broker = resolve(sim.cluster, &p.broker)?.clone();
            let analytic = resolve(sim.cluster, &p.analytic)?.clone();
            let pod = sim.cpu_pod(&analytic);
            if sim.cpu[pod].stressor.is_some() {
                return Err(SimError::Scenario(format!(
                    "analytic pod {} is also a stressor",
                    sim.cpu[pod].key
                )));
            }
            sim.cpu[pod].streams.push(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let offset_us = rng.random_range(0..interval_us);
            let first_jitter = sim.draw_jitter(&mut rng);
            let stream = Stream {
                slice: p.slice_id.clone(),
                src: sim.endpoint(&src),
                broker: sim.endpoint(&broker),
                analytic: sim.endpoint(&analytic),
                pod,
                rng,
                offset_us,
                next_k: 0,
                topic: TopicQueue::new(format!("{}-frames", p.slice_id), w.retention_ms * 1000),
                busy: false,
                queued_us: 0.0,
            };
            let first = offset_us + first_jitter;
            sim.streams.push(stream);
            if first < sim.duration_us {
                sim.push(first, Ev::Generate(i));
            }
        }
        sim.push(0, Ev::Boundary);
        Ok(sim)
    }

    fn draw_jitter(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.jitter_us == 0 {
            0
        } else {
            rng.random_range(0..self.jitter_us)
        }
    }

    fn endpoint(&mut self, pod: &PodInstance) -> usize {
        let key = pod_key(pod);
        if let Some(i) = self.endpoints.iter().position(|e| e.pod == key) {
            return i;
        }
        self.endpoints.push(Endpoint {
            pod: key,
            node: pod.assigned_node.clone().unwrap_or_default(),
            ingress: effective_rate_limit(pod, Direction::Ingress),
            egress: effective_rate_limit(pod, Direction::Egress),
        });
        self.pods_k8s.push(pod.clone());
        self.endpoints.len() - 1
    }

    fn cpu_pod(&mut self, pod: &PodInstance) -> usize {
        let key = pod_key(pod);
        if let Some(i) = self.cpu.iter().position(|c| c.key == key) {
            return i;
        }
        let node_name = pod.assigned_node.clone().unwrap_or_default();
        let node = match self.nodes.iter().position(|n| n.name == node_name) {
            Some(n) => n,
            None => {
                let alloc = self
                    .cluster
                    .nodes
                    .get(&node_name)
                    .map_or(0, |n| n.allocatable().cpu_millicores);
                self.nodes.push(CpuNode {
                    name: node_name,
                    budget_us: (alloc * self.sc.period_ms) as f64,
                    pool_us: 0.0,
                    pods: Vec::new(),
                });
                self.nodes.len() - 1
            }
        };
        let per_mc = self.sc.period_ms as f64;
        let r = &pod.resources;
        let quota_us = match pod.qos_class {
            QosClass::Guaranteed => Some(r.limits.cpu_millicores as f64 * per_mc),
            QosClass::BestEffort => {
                (r.limits.cpu_millicores > 0).then_some(r.limits.cpu_millicores as f64 * per_mc)
            }
        };
        let workers = pod
            .env
            .get("WORKERS")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .unwrap_or(1)
            .max(1) as f64;
        let idx = self.cpu.len();
        self.cpu.push(CpuPod {
            key,
            node,
            qos: pod.qos_class,
            quota_us,
            reservation_us: r.requests.cpu_millicores as f64 * per_mc,
            workers,
            allowance_us: 0.0,
            used_us: 0.0,
            jobs: Vec::new(),
            last_us: 0,
            version: 0,
            throttled: false,
            stressor: None,
            stressing: false,
            streams: Vec::new(),
        });
        self.nodes[node].pods.push(idx);
        idx
    }

    fn push(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn run(&mut self) {
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            if t > self.duration_us {
                break;
            }
            match ev {
                Ev::Boundary => self.boundary(t),
                Ev::Generate(s) => self.generate(s, t),
                Ev::Visible(f) => self.visible(f, t),
                Ev::FetchStart(f) => self.fetch_start(f, t),
                Ev::FetchDone(f) => self.fetch_done(f, t),
                Ev::CpuCheck(p, v) => self.cpu_check(p, v, t),
                Ev::PublishDone(f) => self.publish_done(f, t),
            }
        }
    }

    fn permitted(&self, src: usize, dst: usize) -> bool {
        self.cluster
            .traffic_permitted(&self.pods_k8s[src], &self.pods_k8s[dst])
    }

    fn transfer(&mut self, bits: u64, src: usize, dst: usize, t: u64) -> u64 {
        let (a, b) = (&self.endpoints[src], &self.endpoints[dst]);
        let cap = self.cluster.link_capacity(&a.node, &b.node);
        self.links.transfer_complete_time(bits, a, b, cap, t)
    }

    fn drop_frame(&mut self, f: usize) {
        self.frames[f].fate = Fate::Dropped;
    }

    fn generate(&mut self, s: usize, t: u64) {
        let w = &self.sc.workload;
        let st = &mut self.streams[s];
        let id = st.next_k;
        let size_bits = w.frame_size_bits.sample(&mut st.rng).round().max(1.0) as u64;
        let demand_us = w.cpu_demand_ms.sample(&mut st.rng) * 1000.0;
        st.next_k += 1;
        let f = self.frames.len();
        self.frames.push(Frame {
            id,
            stream: s,
            t1: t,
            t2: 0,
            size_bits,
            demand_us,
            queue_wait_us: 0,
            throttle_us: 0,
            fate: Fate::InFlight,
        });
        let (src, broker) = (self.streams[s].src, self.streams[s].broker);
        if self.permitted(src, broker) {
            let arrive = self.transfer(size_bits, src, broker, t);
            self.push(arrive + self.broker_delay_us, Ev::Visible(f));
        } else {
            self.drop_frame(f);
        }

        let mut rng = self.streams[s].rng.clone();
        let jitter = self.draw_jitter(&mut rng);
        let st = &mut self.streams[s];
        st.rng = rng;
        let next = st.offset_us + st.next_k * self.interval_us + jitter;
        if next < self.duration_us {
            self.push(next, Ev::Generate(s));
        }
    }

    fn visible(&mut self, f: usize, t: u64) {
        let s = self.frames[f].stream;
        self.streams[s].topic.push(f, t);
        self.streams[s].queued_us += self.frames[f].demand_us;
        if !self.streams[s].busy {
            self.try_consume(s, t);
        }
    }

    fn dequeue(&mut self, f: usize) {
        let st = &mut self.streams[self.frames[f].stream];
        st.queued_us = (st.queued_us - self.frames[f].demand_us).max(0.0);
    }

    fn try_consume(&mut self, s: usize, t: u64) {
        let c = consume_from_topic(&mut self.streams[s].topic, t);
        for e in c.expired {
            self.dequeue(e);
            self.drop_frame(e);
        }
        match c.message {
            Some((f, enq)) => {
                self.streams[s].busy = true;
                self.frames[f].queue_wait_us = t - enq;
                self.push(t + self.poll_us, Ev::FetchStart(f));
            }
            None => self.streams[s].busy = false,
        }
    }

    fn fetch_start(&mut self, f: usize, t: u64) {
        let s = self.frames[f].stream;
        let (broker, analytic) = (self.streams[s].broker, self.streams[s].analytic);
        if self.permitted(analytic, broker) {
            let arrive = self.transfer(self.frames[f].size_bits, broker, analytic, t);
            self.push(arrive, Ev::FetchDone(f));
        } else {
            self.dequeue(f);
            self.drop_frame(f);
            self.try_consume(s, t);
        }
    }

    fn fetch_done(&mut self, f: usize, t: u64) {
        self.dequeue(f);
        let demand = self.frames[f].demand_us;
        if demand <= EPS {
            self.processed(f, t);
            return;
        }
        let p = self.streams[self.frames[f].stream].pod;
        self.advance(p, t);
        let throttled = self.cpu[p].throttled;
        self.cpu[p].jobs.push(Job {
            frame: f,
            remaining_us: demand,
            throttled_since: throttled.then_some(t),
        });
        self.reschedule(p, t);
    }

    fn processed(&mut self, f: usize, t: u64) {
        self.frames[f].t2 = t;
        let s = self.frames[f].stream;
        let (broker, analytic) = (self.streams[s].broker, self.streams[s].analytic);
        if self.permitted(analytic, broker) {
            let bits = ((self.frames[f].size_bits as f64) * self.sc.workload.output_size_ratio)
                .round()
                .max(1.0) as u64;
            let arrive = self.transfer(bits, analytic, broker, t);
            self.push(arrive, Ev::PublishDone(f));
        } else {
            self.drop_frame(f);
            self.try_consume(s, t);
        }
    }

    fn publish_done(&mut self, f: usize, t: u64) {
        self.frames[f].fate = Fate::Sampled;
        let s = self.frames[f].stream;
        self.try_consume(s, t);
    }

    /// Runs pod `p` forward to `t` at its current allotment.
    fn advance(&mut self, p: usize, t: u64) {
        let pod = &mut self.cpu[p];
        let dt = t.saturating_sub(pod.last_us) as f64;
        pod.last_us = t;
        if dt == 0.0 || pod.throttled {
            return;
        }
        if pod.stressing {
            let c = (pod.workers * dt).min(pod.allowance_us);
            pod.allowance_us -= c;
            pod.used_us += c;
            return;
        }
        if pod.jobs.is_empty() {
            return;
        }
        let share = (pod.workers * dt).min(pod.allowance_us) / pod.jobs.len() as f64;
        let mut consumed = 0.0;
        for j in &mut pod.jobs {
            let c = share.min(j.remaining_us);
            j.remaining_us -= c;
            consumed += c;
        }
        pod.allowance_us = (pod.allowance_us - consumed).max(0.0);
        pod.used_us += consumed;
    }

    fn reschedule(&mut self, p: usize, t: u64) {
        self.cpu[p].version += 1;
        if self.cpu[p].jobs.is_empty() || self.cpu[p].throttled {
            return;
        }
        if self.cpu[p].allowance_us <= EPS {
            self.top_up(p);
        }
        let pod = &mut self.cpu[p];
        if pod.allowance_us <= EPS {
            pod.throttled = true;
            for j in &mut pod.jobs {
                j.throttled_since = Some(t);
            }
            return;
        }
        let per_job = pod.workers / pod.jobs.len() as f64;
        let min_rem = pod
            .jobs
            .iter()
            .map(|j| j.remaining_us)
            .fold(f64::INFINITY, f64::min);
        let dt = (min_rem / per_job)
            .min(pod.allowance_us / pod.workers)
            .ceil()
            .max(1.0) as u64;
        let v = pod.version;
        self.push(t + dt, Ev::CpuCheck(p, v));
    }

    /// Mid-period top-up from the node's unallocated pool once a pod's
    /// allowance is spent.
    fn top_up(&mut self, p: usize) {
        let pod = &self.cpu[p];
        let need: f64 = pod.jobs.iter().map(|j| j.remaining_us).sum::<f64>() - pod.allowance_us;
        let headroom = pod
            .quota_us
            .map_or(f64::INFINITY, |q| q - pod.used_us - pod.allowance_us);
        let amount = need.min(headroom).min(self.nodes[pod.node].pool_us);
        if amount <= EPS {
            return;
        }
        let n = pod.node;
        self.nodes[n].pool_us -= amount;
        self.cpu[p].allowance_us += amount;
    }

    fn cpu_check(&mut self, p: usize, version: u64, t: u64) {
        if self.cpu[p].version != version {
            return;
        }
        self.advance(p, t);
        let (done, rest): (Vec<Job>, Vec<Job>) = std::mem::take(&mut self.cpu[p].jobs)
            .into_iter()
            .partition(|j| j.remaining_us <= EPS);
        self.cpu[p].jobs = rest;
        for j in done {
            self.processed(j.frame, t);
        }
        self.reschedule(p, t);
    }

    fn boundary(&mut self, t: u64) {
        for p in 0..self.cpu.len() {
            self.advance(p, t);
        }
        if t > 0 {
            let start_ms = (t - self.period_us) / 1000;
            for node in &self.nodes {
                let mut total = 0.0;
                for &p in &node.pods {
                    let pod = &self.cpu[p];
                    total += pod.used_us;
                    if let Some(q) = pod.quota_us {
                        if pod.used_us > q + EPS {
                            self.violations.push(CpuViolation::QuotaExceeded {
                                pod: pod.key.clone(),
                                period_start_ms: start_ms,
                                used_us: pod.used_us,
                                quota_us: q,
                            });
                        }
                    }
                }
                if total > node.budget_us + EPS {
                    self.violations.push(CpuViolation::NodeOverCommitted {
                        node: node.name.clone(),
                        period_start_ms: start_ms,
                        used_us: total,
                        budget_us: node.budget_us,
                    });
                }
                self.periods_audited += 1;
            }
        }

        let full = self.period_us as f64;
        for n in 0..self.nodes.len() {
            let pods = self.nodes[n].pods.clone();
            let mut claims = Vec::with_capacity(pods.len());
            for &p in &pods {
                let queued: f64 = self.cpu[p]
                    .streams
                    .iter()
                    .map(|&s| self.streams[s].queued_us)
                    .sum();
                let pod = &mut self.cpu[p];
                if pod.throttled {
                    for j in &mut pod.jobs {
                        if let Some(since) = j.throttled_since.take() {
                            self.frames[j.frame].throttle_us += t - since;
                        }
                    }
                    pod.throttled = false;
                }
                pod.stressing = pod.stressor.is_some_and(|(a, b)| t >= a && t < b);
                let demand = if pod.stressor.is_some() {
                    if pod.stressing {
                        pod.workers * full
                    } else {
                        0.0
                    }
                } else if pod.qos == QosClass::Guaranteed {
                    // reserved whether used or not
                    pod.workers * full
                } else {
                    let runnable: f64 = pod.jobs.iter().map(|j| j.remaining_us).sum();
                    (runnable + queued).min(pod.workers * full)
                };
                claims.push(CpuClaim {
                    qos: pod.qos,
                    quota_us: pod.quota_us,
                    reservation_us: pod.reservation_us,
                    demand_us: demand,
                });
            }
            let grants = cpu_grant(&claims, self.nodes[n].budget_us);
            for (&p, g) in pods.iter().zip(&grants) {
                self.cpu[p].allowance_us = *g;
                self.cpu[p].used_us = 0.0;
            }
            self.nodes[n].pool_us = (self.nodes[n].budget_us - grants.iter().sum::<f64>()).max(0.0);
        }
        for p in 0..self.cpu.len() {
            self.reschedule(p, t);
        }
        if t + self.period_us <= self.duration_us {
            self.push(t + self.period_us, Ev::Boundary);
        }
    }

    fn phase_of(&self, t1: u64) -> String {
        if self.sc.phases.is_empty() {
            return "all".into();
        }
        self.sc
            .phase_at(t1 as f64 / 1000.0)
            .map_or_else(|| "outside".into(), |p| p.name.clone())
    }

    fn finish(mut self, seed: u64) -> MetricsReport {
        for s in 0..self.streams.len() {
            let expired = self.streams[s].topic.expire(self.duration_us);
            for f in expired {
                self.drop_frame(f);
            }
        }
        let mut counts: BTreeMap<(String, String), FrameCounts> = BTreeMap::new();
        for st in &self.streams {
            for ph in self.sc.phase_names() {
                counts.entry((st.slice.clone(), ph)).or_default();
            }
        }
        let mut records = Vec::new();
        for f in &self.frames {
            let slice = self.streams[f.stream].slice.clone();
            let phase = self.phase_of(f.t1);
            let c = counts.entry((slice.clone(), phase.clone())).or_default();
            c.generated += 1;
            match f.fate {
                Fate::InFlight => c.in_flight += 1,
                Fate::Dropped => c.dropped += 1,
                Fate::Sampled => {
                    c.sampled += 1;
                    records.push(FrameRecord {
                        frame_id: f.id,
                        slice_id: slice,
                        phase,
                        latency_ms: (f.t2 - f.t1) as f64 / 1000.0,
                        cpu_demand_ms: f.demand_us / 1000.0,
                        size_bits: f.size_bits,
                        queue_wait_ms: f.queue_wait_us as f64 / 1000.0,
                        throttle_wait_ms: f.throttle_us as f64 / 1000.0,
                    });
                }
            }
        }
        records.sort_by(|a, b| (&a.slice_id, a.frame_id).cmp(&(&b.slice_id, b.frame_id)));
        let summaries = summarize(&records, &counts, self.sc.workload.fps);
        MetricsReport {
            scenario: self.sc.name.clone(),
            seed,
            frames: records,
            summaries,
            cpu_violations: self.violations,
            periods_audited: self.periods_audited,
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One processed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameRecord {
    pub frame_id: u64,
    pub slice_id: String,
    pub phase: String,
    pub latency_ms: f64,
    pub cpu_demand_ms: f64,
    pub size_bits: u64,
    /// Time spent queued in the broker topic.
    pub queue_wait_ms: f64,
    /// Time the frame's processing job spent throttled.
    pub throttle_wait_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameCounts {
    pub generated: u64,
    pub sampled: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl FrameCounts {
    pub fn conserved(&self) -> bool {
        self.generated == self.sampled + self.dropped + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseSummary {
    pub slice_id: String,
    pub phase: String,
    #[serde(flatten)]
    pub counts: FrameCounts,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub stddev_ms: f64,
    pub throughput_fps: f64,
    pub mean_queue_wait_ms: f64,
    pub mean_throttle_wait_ms: f64,
}

/// A per-period CPU accounting breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum CpuViolation {
    #[serde(rename_all = "camelCase")]
    QuotaExceeded {
        pod: String,
        period_start_ms: u64,
        used_us: f64,
        quota_us: f64,
    },
    #[serde(rename_all = "camelCase")]
    NodeOverCommitted {
        node: String,
        period_start_ms: u64,
        used_us: f64,
        budget_us: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub summaries: Vec<PhaseSummary>,
    pub cpu_violations: Vec<CpuViolation>,
    /// Periods audited across all nodes.
    pub periods_audited: u64,
}

impl MetricsReport {
    pub fn summary(&self, slice_id: &str, phase: &str) -> Option<&PhaseSummary> {
        self.summaries
            .iter()
            .find(|s| s.slice_id == slice_id && s.phase == phase)
    }

    /// `frameId,sliceId,phase,latencyMs`, ordered by slice then frame.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&FrameRecord> = self.frames.iter().collect();
        rows.sort_by(|a, b| (&a.slice_id, a.frame_id).cmp(&(&b.slice_id, b.frame_id)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frameId", "sliceId", "phase", "latencyMs"])
            .expect("in-memory write");
        for r in rows {
            w.write_record([
                r.frame_id.to_string(),
                r.slice_id.clone(),
                r.phase.clone(),
                format!("{:.3}", r.latency_ms),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub(crate) fn summarize(
    frames: &[FrameRecord],
    counts: &BTreeMap<(String, String), FrameCounts>,
    fps: f64,
) -> Vec<PhaseSummary> {
    let mut by_key: BTreeMap<(&str, &str), Vec<&FrameRecord>> = BTreeMap::new();
    for f in frames {
        by_key
            .entry((f.slice_id.as_str(), f.phase.as_str()))
            .or_default()
            .push(f);
    }
    counts
        .iter()
        .map(|((slice, phase), c)| {
            let recs = by_key
                .get(&(slice.as_str(), phase.as_str()))
                .cloned()
                .unwrap_or_default();
            let mut lat: Vec<f64> = recs.iter().map(|r| r.latency_ms).collect();
            lat.sort_by(f64::total_cmp);
            let queue: Vec<f64> = recs.iter().map(|r| r.queue_wait_ms).collect();
            let throttle: Vec<f64> = recs.iter().map(|r| r.throttle_wait_ms).collect();
            PhaseSummary {
                slice_id: slice.clone(),
                phase: phase.clone(),
                counts: *c,
                mean_ms: mean(&lat),
                p50_ms: percentile(&lat, 50.0),
                p95_ms: percentile(&lat, 95.0),
                p99_ms: percentile(&lat, 99.0),
                stddev_ms: stddev(&lat),
                throughput_fps: if c.generated == 0 {
                    0.0
                } else {
                    fps * c.sampled as f64 / c.generated as f64
                },
                mean_queue_wait_ms: mean(&queue),
                mean_throttle_wait_ms: mean(&throttle),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), 5.0);
        assert_eq!(percentile(&xs, 95.0), 10.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }

    #[test]
    fn csv_sorted_and_rounded() {
        let rec = |id, slice: &str, lat| FrameRecord {
            frame_id: id,
            slice_id: slice.into(),
            phase: "I".into(),
            latency_ms: lat,
            cpu_demand_ms: 0.0,
            size_bits: 0,
            queue_wait_ms: 0.0,
            throttle_wait_ms: 0.0,
        };
        let report = MetricsReport {
            scenario: "x".into(),
            seed: 1,
            frames: vec![rec(2, "b", 1.0), rec(1, "b", 2.0), rec(7, "a", 1.23456)],
            summaries: vec![],
            cpu_violations: vec![],
            periods_audited: 0,
        };
        assert_eq!(
            report.to_csv(),
            "frameId,sliceId,phase,latencyMs\n7,a,I,1.235\n1,b,I,2.000\n2,b,I,1.000\n"
        );
    }

    proptest! {
        #[test]
        fn percentiles_ordered(mut xs in proptest::collection::vec(0.0f64..1000.0, 1..200)) {
            xs.sort_by(f64::total_cmp);
            let p50 = percentile(&xs, 50.0);
            let p95 = percentile(&xs, 95.0);
            let p99 = percentile(&xs, 99.0);
            prop_assert!(xs[0] <= p50 && p50 <= p95 && p95 <= p99 && p99 <= xs[xs.len() - 1]);
            let m = mean(&xs);
            prop_assert!(xs[0] - 1e-9 <= m && m <= xs[xs.len() - 1] + 1e-9);
        }
    }
}

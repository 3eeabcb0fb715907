//! Per-period CPU allotment in the style of CFS bandwidth control.

use serde::{Deserialize, Serialize};

use crate::descriptors::QosClass;

/// One pod's claim on a node for the coming period. Times are µs of
/// single-core runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CpuClaim {
    pub qos: QosClass,
    /// Runtime cap per period from the cpu limit, if any.
    pub quota_us: Option<f64>,
    /// Runtime reserved per period from the cpu request.
    pub reservation_us: f64,
    pub demand_us: f64,
}

impl CpuClaim {
    fn cap(&self) -> f64 {
        let d = self.demand_us.max(0.0);
        self.quota_us.map_or(d, |q| d.min(q.max(0.0)))
    }
}

/// Splits `budget_us` among `claims`. Guaranteed pods first receive
/// `min(demand, quota)` (shared by reservation if that overflows the budget);
/// what is left is split equally among best-effort pods, each capped at its
/// own demand and quota.
pub fn cpu_grant(claims: &[CpuClaim], budget_us: f64) -> Vec<f64> {
    let mut grants = vec![0.0; claims.len()];
    let budget = budget_us.max(0.0);

    let guaranteed: Vec<usize> = (0..claims.len())
        .filter(|&i| claims[i].qos == QosClass::Guaranteed)
        .collect();
    let want: f64 = guaranteed.iter().map(|&i| claims[i].cap()).sum();
    if want <= budget {
        for &i in &guaranteed {
            grants[i] = claims[i].cap();
        }
    } else {
        let weights: Vec<f64> = guaranteed
            .iter()
            .map(|&i| claims[i].reservation_us.max(1.0))
            .collect();
        let caps: Vec<f64> = guaranteed.iter().map(|&i| claims[i].cap()).collect();
        for (k, g) in water_fill(&caps, &weights, budget).into_iter().enumerate() {
            grants[guaranteed[k]] = g;
        }
    }

    let used: f64 = grants.iter().sum();
    let leftover = (budget - used).max(0.0);
    let best_effort: Vec<usize> = (0..claims.len())
        .filter(|&i| claims[i].qos == QosClass::BestEffort)
        .collect();
    let caps: Vec<f64> = best_effort.iter().map(|&i| claims[i].cap()).collect();
    let weights = vec![1.0; caps.len()];
    for (k, g) in water_fill(&caps, &weights, leftover)
        .into_iter()
        .enumerate()
    {
        grants[best_effort[k]] = g;
    }
    grants
}

/// Weighted max-min fair split of `total` with per-entry caps.
fn water_fill(caps: &[f64], weights: &[f64], total: f64) -> Vec<f64> {
    let mut out = vec![0.0; caps.len()];
    let mut open: Vec<usize> = (0..caps.len()).filter(|&i| caps[i] > 0.0).collect();
    let mut remaining = total;
    while !open.is_empty() && remaining > 1e-9 {
        let wsum: f64 = open.iter().map(|&i| weights[i]).sum();
        let level = remaining / wsum;
        let saturated: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&i| caps[i] - out[i] <= level * weights[i])
            .collect();
        if saturated.is_empty() {
            for &i in &open {
                out[i] += level * weights[i];
            }
            break;
        }
        for &i in &saturated {
            remaining -= caps[i] - out[i];
            out[i] = caps[i];
        }
        open.retain(|i| !saturated.contains(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(res: f64, demand: f64) -> CpuClaim {
        CpuClaim {
            qos: QosClass::Guaranteed,
            quota_us: Some(res),
            reservation_us: res,
            demand_us: demand,
        }
    }

    fn be(quota: Option<f64>, demand: f64) -> CpuClaim {
        CpuClaim {
            qos: QosClass::BestEffort,
            quota_us: quota,
            reservation_us: 0.0,
            demand_us: demand,
        }
    }

    #[test]
    fn limited_pod_capped_at_quota() {
        // 500 mc over a 100 ms period is 50 ms of runtime
        let grants = cpu_grant(&[be(Some(50_000.0), 80_000.0)], 360_000.0);
        assert_eq!(grants, vec![50_000.0]);
    }

    #[test]
    fn guaranteed_capped_by_limit_not_node() {
        let grants = cpu_grant(&[g(180_000.0, 500_000.0)], 360_000.0);
        assert_eq!(grants, vec![180_000.0]);
    }

    #[test]
    fn best_effort_equal_split() {
        let grants = cpu_grant(&[be(None, 80_000.0), be(None, 80_000.0)], 100_000.0);
        assert_eq!(grants, vec![50_000.0, 50_000.0]);
    }

    #[test]
    fn small_best_effort_demand_frees_share() {
        let grants = cpu_grant(
            &[
                g(180_000.0, 20_000.0),
                be(None, 10_000.0),
                be(None, 400_000.0),
            ],
            360_000.0,
        );
        assert_eq!(grants, vec![20_000.0, 10_000.0, 330_000.0]);
    }

    /// Brute-force reference: one-millisecond quanta; in every quantum the
    /// node capacity goes first to guaranteed pods with unmet want, in
    /// proportion to their reservation, then equally to best-effort pods,
    /// redistributing whatever a pod cannot absorb within the quantum.
    fn per_ms_oracle(claims: &[CpuClaim], budget_us: f64, period_ms: usize) -> Vec<f64> {
        let quantum = budget_us / period_ms as f64;
        let mut got = vec![0.0f64; claims.len()];
        let want: Vec<f64> = claims
            .iter()
            .map(|c| {
                let d = c.demand_us.max(0.0);
                match c.quota_us {
                    Some(q) => d.min(q),
                    None => d,
                }
            })
            .collect();
        for _ in 0..period_ms {
            let mut cap = quantum;
            for class in [QosClass::Guaranteed, QosClass::BestEffort] {
                loop {
                    let hungry: Vec<usize> = (0..claims.len())
                        .filter(|&i| claims[i].qos == class && want[i] - got[i] > 1e-9)
                        .collect();
                    if hungry.is_empty() || cap <= 1e-9 {
                        break;
                    }
                    let weight = |i: usize| match class {
                        QosClass::Guaranteed => claims[i].reservation_us.max(1.0),
                        QosClass::BestEffort => 1.0,
                    };
                    let wsum: f64 = hungry.iter().map(|&i| weight(i)).sum();
                    let mut given = 0.0;
                    for &i in &hungry {
                        let share = cap * weight(i) / wsum;
                        let take = share.min(want[i] - got[i]);
                        got[i] += take;
                        given += take;
                    }
                    cap -= given;
                    if given <= 1e-9 {
                        break;
                    }
                }
            }
        }
        got
    }

    fn arb_claim() -> impl Strategy<Value = CpuClaim> {
        (
            any::<bool>(),
            0u64..2000,
            0u64..4000,
            proptest::option::of(0u64..2000),
        )
            .prop_map(|(guaranteed, req_mc, demand_ms_x10, be_limit_mc)| {
                // 100 ms period: 1 mc is 100 µs of runtime
                if guaranteed {
                    let r = (req_mc.max(1) * 100) as f64;
                    CpuClaim {
                        qos: QosClass::Guaranteed,
                        quota_us: Some(r),
                        reservation_us: r,
                        demand_us: (demand_ms_x10 * 100) as f64,
                    }
                } else {
                    CpuClaim {
                        qos: QosClass::BestEffort,
                        quota_us: be_limit_mc.map(|l| (l * 100) as f64),
                        reservation_us: 0.0,
                        demand_us: (demand_ms_x10 * 100) as f64,
                    }
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn matches_per_ms_oracle(
            claims in proptest::collection::vec(arb_claim(), 1..7),
            alloc_mc in 500u64..8000,
        ) {
            let period_ms = 100;
            let budget = (alloc_mc * 100) as f64;
            let fast = cpu_grant(&claims, budget);
            let slow = per_ms_oracle(&claims, budget, period_ms);
            let quantum = budget / period_ms as f64;
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= quantum + 1e-6, "{fast:?} vs {slow:?}");
            }
        }

        #[test]
        fn grant_invariants(
            claims in proptest::collection::vec(arb_claim(), 1..7),
            alloc_mc in 500u64..8000,
            extra in proptest::collection::vec(arb_claim(), 0..3),
        ) {
            let budget = (alloc_mc * 100) as f64;
            let grants = cpu_grant(&claims, budget);
            let total: f64 = grants.iter().sum();
            prop_assert!(total <= budget + 1e-6);
            for (c, gr) in claims.iter().zip(&grants) {
                prop_assert!(*gr >= -1e-9 && *gr <= c.demand_us + 1e-6);
                if let Some(q) = c.quota_us { prop_assert!(*gr <= q + 1e-6); }
            }
            // work conservation
            let backlogged = claims.iter().zip(&grants).any(|(c, gr)| c.cap() - gr > 1e-6);
            if backlogged {
                prop_assert!((total - budget).abs() < 1e-3);
            }
            // best-effort interferers never dent guaranteed grants
            let reserved: f64 = claims.iter()
                .filter(|c| c.qos == QosClass::Guaranteed)
                .map(|c| c.reservation_us).sum();
            if reserved <= budget {
                let mut more = claims.clone();
                more.extend(extra.iter().map(|c| CpuClaim { qos: QosClass::BestEffort, reservation_us: 0.0, ..*c }));
                let after = cpu_grant(&more, budget);
                for (i, c) in claims.iter().enumerate() {
                    if c.qos == QosClass::Guaranteed {
                        prop_assert!(after[i] + 1e-6 >= c.cap());
                    }
                }
            }
        }
    }
}

//! Simulated cost to reach loss thresholds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::metrics::MetricRow;

#[derive(Debug, Clone, PartialEq)]
pub struct CostEntry {
    pub run_id: String,
    pub seed: usize,
    pub threshold: f64,
    /// `None` when the run never got to the threshold.
    pub cost: Option<f64>,
}

/// `oracle_calls * tau + inner_steps`, or the recorded `sim_cost` when no
/// `tau` is given.
pub fn cost_at(row: &MetricRow, tau: Option<f64>) -> f64 {
    match tau {
        Some(tau) => row.oracle_calls as f64 * tau + row.inner_steps as f64,
        None => row.sim_cost,
    }
}

/// For every (run, seed) and threshold, the cost at the first recorded
/// point whose loss is at or below the threshold.
pub fn cost_report(rows: &[MetricRow], tau: Option<f64>, thresholds: &[f64]) -> Vec<CostEntry> {
    let mut traces: BTreeMap<(&str, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        traces.entry((r.run_id.as_str(), r.seed)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((id, seed), mut trace) in traces {
        trace.sort_by_key(|r| r.outer_t);
        for &thr in thresholds {
            out.push(CostEntry {
                run_id: id.to_string(),
                seed,
                threshold: thr,
                cost: trace.iter().find(|r| r.loss <= thr).map(|r| cost_at(r, tau)),
            });
        }
    }
    out
}

/// Run ids ordered by their median cost over seeds at one threshold;
/// runs with any unreached seed go last.
pub fn rank(entries: &[CostEntry], threshold: f64) -> Vec<(String, Option<f64>)> {
    let mut by_run: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.threshold == threshold) {
        by_run.entry(e.run_id.as_str()).or_default().push(e.cost);
    }
    let mut ranked: Vec<(String, Option<f64>)> = by_run
        .into_iter()
        .map(|(id, costs)| {
            let med = costs
                .iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|c| crate::metrics::quantile(&c, 0.5));
            (id.to_string(), med)
        })
        .collect();
    ranked.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.0.cmp(&b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    ranked
}

/// CSV table with an `unreached` marker.
pub fn format_report(entries: &[CostEntry]) -> String {
    let mut s = String::from("run_id,seed,threshold,sim_cost\n");
    for e in entries {
        let cost = e.cost.map_or_else(|| "unreached".to_string(), |c| c.to_string());
        writeln!(s, "{},{},{},{}", e.run_id, e.seed, e.threshold, cost).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: &str, points: &[(u64, u64, f64)]) -> Vec<MetricRow> {
        points
            .iter()
            .enumerate()
            .map(|(t, &(calls, inner, loss))| MetricRow {
                run_id: id.into(),
                seed: 0,
                outer_t: t,
                oracle_calls: calls,
                inner_steps: inner,
                sim_cost: calls as f64 * 10.0 + inner as f64,
                wall_ms: 0.0,
                eta: 1.0,
                loss,
                grad_norm: 0.0,
                eps: None,
                zeta2: None,
            })
            .collect()
    }

    #[test]
    fn first_crossing_and_unreached() {
        let rows = trace("a", &[(0, 0, 5.0), (1, 4, 3.0), (2, 8, 1.0)]);
        let r = cost_report(&rows, None, &[4.0, 1.0, 0.5]);
        assert_eq!(r[0].cost, Some(14.0));
        assert_eq!(r[1].cost, Some(28.0));
        assert_eq!(r[2].cost, None);
        assert!(format_report(&r).contains("a,0,0.5,unreached"));
        let r = cost_report(&rows, Some(1000.0), &[2.0]);
        assert_eq!(r[0].cost, Some(2008.0));
    }

    #[test]
    fn zero_tau_ranks_by_inner_steps() {
        let mut rows = trace("few-calls", &[(0, 0, 5.0), (1, 50, 1.0)]);
        rows.extend(trace("many-calls", &[(0, 0, 5.0), (100, 10, 1.0)]));
        let entries = cost_report(&rows, Some(0.0), &[1.0]);
        let ranked = rank(&entries, 1.0);
        assert_eq!(ranked[0], ("many-calls".to_string(), Some(10.0)));
        assert_eq!(ranked[1], ("few-calls".to_string(), Some(50.0)));
    }
}

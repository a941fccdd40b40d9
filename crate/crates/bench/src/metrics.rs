//! Per-run metric CSVs and the cross-seed summary.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use sso_core::RunTrace;

pub const BASE_COLUMNS: [&str; 10] = [
    "run_id",
    "seed",
    "outer_t",
    "oracle_calls",
    "inner_steps",
    "sim_cost",
    "wall_ms",
    "eta",
    "loss",
    "grad_norm",
];
pub const DIAGNOSTIC_COLUMNS: [&str; 2] = ["eps", "zeta2"];

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "run_id",
    "outer_t",
    "seeds",
    "oracle_calls_mean",
    "inner_steps_mean",
    "sim_cost_mean",
    "loss_mean",
    "loss_q25",
    "loss_q75",
    "grad_norm_mean",
    "grad_norm_q25",
    "grad_norm_q75",
];

/// One row of a metrics CSV. `seed` is the seed index within the experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: usize,
    pub outer_t: usize,
    pub oracle_calls: u64,
    pub inner_steps: u64,
    pub sim_cost: f64,
    pub wall_ms: f64,
    pub eta: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub eps: Option<f64>,
    pub zeta2: Option<f64>,
}

pub fn rows_from_trace(run_id: &str, seed: usize, trace: &RunTrace) -> Vec<MetricRow> {
    trace
        .records
        .iter()
        .map(|r| MetricRow {
            run_id: run_id.to_string(),
            seed,
            outer_t: r.outer_t,
            oracle_calls: r.oracle_calls,
            inner_steps: r.inner_steps,
            sim_cost: r.sim_cost,
            wall_ms: r.wall_ms,
            eta: r.eta,
            loss: r.loss,
            grad_norm: r.grad_norm,
            eps: r.eps,
            zeta2: r.zeta2,
        })
        .collect()
}

// `Display` for f64 prints the shortest string that parses back exactly.
fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_run_csv(path: &Path, rows: &[MetricRow], diagnostics: bool) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if diagnostics {
        header.extend(DIAGNOSTIC_COLUMNS);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.run_id.clone(),
            r.seed.to_string(),
            r.outer_t.to_string(),
            r.oracle_calls.to_string(),
            r.inner_steps.to_string(),
            r.sim_cost.to_string(),
            r.wall_ms.to_string(),
            r.eta.to_string(),
            r.loss.to_string(),
            r.grad_norm.to_string(),
        ];
        if diagnostics {
            rec.push(fmt_opt(r.eps));
            rec.push(fmt_opt(r.zeta2));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(s: Option<&str>) -> anyhow::Result<Option<f64>> {
    match s {
        None | Some("") => Ok(None),
        Some(v) => Ok(Some(v.parse()?)),
    }
}

pub fn read_run_csv(path: &Path) -> anyhow::Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < BASE_COLUMNS.len() || header[..BASE_COLUMNS.len()] != BASE_COLUMNS {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(MetricRow {
            run_id: f(0).to_string(),
            seed: f(1).parse()?,
            outer_t: f(2).parse()?,
            oracle_calls: f(3).parse()?,
            inner_steps: f(4).parse()?,
            sim_cost: f(5).parse()?,
            wall_ms: f(6).parse()?,
            eta: f(7).parse()?,
            loss: f(8).parse()?,
            grad_norm: f(9).parse()?,
            eps: parse_opt(rec.get(10))?,
            zeta2: parse_opt(rec.get(11))?,
        });
    }
    Ok(rows)
}

/// Every `runs/*.csv` under an experiment directory, sorted by
/// `(run_id, seed, outer_t)`.
pub fn read_experiment(dir: &Path) -> anyhow::Result<Vec<MetricRow>> {
    let runs = dir.join("runs");
    let mut paths: Vec<_> = std::fs::read_dir(&runs)
        .with_context(|| format!("listing {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_run_csv(&p)?);
    }
    rows.sort_by(|a, b| (&a.run_id, a.seed, a.outer_t).cmp(&(&b.run_id, b.seed, b.outer_t)));
    Ok(rows)
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `values` need not be sorted.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub outer_t: usize,
    pub seeds: usize,
    pub oracle_calls_mean: f64,
    pub inner_steps_mean: f64,
    pub sim_cost_mean: f64,
    pub loss_mean: f64,
    pub loss_q25: f64,
    pub loss_q75: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_q25: f64,
    pub grad_norm_q75: f64,
}

/// Group by `(run_id, outer_t)` and aggregate over seeds, in seed order.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.run_id.as_str(), r.outer_t)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((id, t), mut g)| {
            g.sort_by_key(|r| r.seed);
            let col = |f: fn(&MetricRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let loss = col(|r| r.loss);
            let gn = col(|r| r.grad_norm);
            SummaryRow {
                run_id: id.to_string(),
                outer_t: t,
                seeds: g.len(),
                oracle_calls_mean: mean(&col(|r| r.oracle_calls as f64)),
                inner_steps_mean: mean(&col(|r| r.inner_steps as f64)),
                sim_cost_mean: mean(&col(|r| r.sim_cost)),
                loss_mean: mean(&loss),
                loss_q25: quantile(&loss, 0.25),
                loss_q75: quantile(&loss, 0.75),
                grad_norm_mean: mean(&gn),
                grad_norm_q25: quantile(&gn, 0.25),
                grad_norm_q75: quantile(&gn, 0.75),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.outer_t.to_string(),
            r.seeds.to_string(),
            r.oracle_calls_mean.to_string(),
            r.inner_steps_mean.to_string(),
            r.sim_cost_mean.to_string(),
            r.loss_mean.to_string(),
            r.loss_q25.to_string(),
            r.loss_q75.to_string(),
            r.grad_norm_mean.to_string(),
            r.grad_norm_q25.to_string(),
            r.grad_norm_q75.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> anyhow::Result<f64> { Ok(rec.get(i).unwrap_or("").parse()?) };
        out.push(SummaryRow {
            run_id: rec.get(0).unwrap_or("").to_string(),
            outer_t: rec.get(1).unwrap_or("").parse()?,
            seeds: rec.get(2).unwrap_or("").parse()?,
            oracle_calls_mean: f(3)?,
            inner_steps_mean: f(4)?,
            sim_cost_mean: f(5)?,
            loss_mean: f(6)?,
            loss_q25: f(7)?,
            loss_q75: f(8)?,
            grad_norm_mean: f(9)?,
            grad_norm_q25: f(10)?,
            grad_norm_q75: f(11)?,
        });
    }
    Ok(out)
}

/// File contents with the `wall_ms` column removed, for determinism checks.
pub fn without_wall_clock(csv_text: &str) -> String {
    let idx = BASE_COLUMNS.iter().position(|c| *c == "wall_ms").expect("column exists");
    csv_text
        .lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        // R: quantile(c(1, 2, 4, 10), c(.25, .5, .75)) = 1.75 3 5.5
        let v = [10.0, 1.0, 4.0, 2.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.75), 5.5);
        assert_eq!(quantile(&[3.0], 0.25), 3.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    fn row(id: &str, seed: usize, t: usize, loss: f64) -> MetricRow {
        MetricRow {
            run_id: id.into(),
            seed,
            outer_t: t,
            oracle_calls: t as u64,
            inner_steps: 2 * t as u64,
            sim_cost: 2.0 * t as f64,
            wall_ms: 0.5,
            eta: 0.1,
            loss,
            grad_norm: loss / 2.0,
            eps: None,
            zeta2: None,
        }
    }

    #[test]
    fn summary_groups_over_seeds() {
        let rows = vec![row("a", 0, 0, 1.0), row("a", 1, 0, 3.0), row("a", 2, 0, 2.0), row("b", 0, 5, 7.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].seeds, s[0].loss_mean, s[0].loss_q25, s[0].loss_q75), (3, 2.0, 1.5, 2.5));
        assert_eq!((s[1].run_id.as_str(), s[1].outer_t, s[1].loss_mean), ("b", 5, 7.0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let mut rows = vec![row("a", 0, 0, 0.1 + 0.2), row("a", 0, 3, 1e-300)];
        rows[1].eps = Some(std::f64::consts::PI);
        write_run_csv(&p, &rows, true).unwrap();
        assert_eq!(read_run_csv(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("run_id,seed,outer_t,oracle_calls,inner_steps,sim_cost,wall_ms,eta,loss,grad_norm,eps,zeta2\n"));
        assert!(!without_wall_clock(&text).contains("wall_ms"));
    }
}

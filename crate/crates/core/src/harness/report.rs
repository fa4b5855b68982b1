//! CSV summaries and per-method comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mad, median, RunSummary};

/// Flat CSV form of a [`RunSummary`]. Missing values are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seed: u64,
    pub episodes: u64,
    pub episodes_to_90: Option<u64>,
    pub episodes_to_90_censored: u64,
    pub capability_episodes_to_90: Option<u64>,
    pub final_v_max_x: f64,
    pub final_v_max_y: f64,
    pub final_v_max_z: f64,
    pub final_v_cap: Option<f64>,
    pub mean_cot: Option<f64>,
    pub stability: Option<f64>,
    pub success_rate: f64,
    pub success_ci_low: f64,
    pub success_ci_high: f64,
    pub cumulative_regret: f64,
    pub mean_utility: f64,
    pub clipped_updates: u64,
}

impl From<&RunSummary> for SummaryRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            method: s.method.clone(),
            seed: s.seed,
            episodes: s.episodes,
            episodes_to_90: s.episodes_to_90,
            episodes_to_90_censored: s.episodes_to_90_or_censored(),
            capability_episodes_to_90: s.capability_episodes_to_90,
            final_v_max_x: s.final_v_max[0],
            final_v_max_y: s.final_v_max[1],
            final_v_max_z: s.final_v_max[2],
            final_v_cap: s.final_v_cap,
            mean_cot: s.mean_cot,
            stability: s.stability,
            success_rate: s.success.rate,
            success_ci_low: s.success.ci_low,
            success_ci_high: s.success.ci_high,
            cumulative_regret: s.cumulative_regret,
            mean_utility: s.mean_utility,
            clipped_updates: s.clipped_updates,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Argument(format!("csv: {other:?}")),
    }
}

pub fn write_summary_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in runs {
        w.serialize(SummaryRow::from(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Lower,
    Higher,
}

type Extract = fn(&SummaryRow) -> Option<f64>;

const METRICS: &[(&str, Better, Extract)] = &[
    ("episodes_to_90", Better::Lower, |r| Some(r.episodes_to_90_censored as f64)),
    ("capability_episodes_to_90", Better::Lower, |r| {
        r.final_v_cap
            .map(|_| r.capability_episodes_to_90.unwrap_or(r.episodes + 1) as f64)
    }),
    ("cumulative_regret", Better::Lower, |r| Some(r.cumulative_regret)),
    ("success_rate", Better::Higher, |r| Some(r.success_rate)),
    ("final_v_max_x", Better::Higher, |r| Some(r.final_v_max_x)),
    ("mean_cot", Better::Lower, |r| r.mean_cot),
    ("stability", Better::Higher, |r| r.stability),
    ("mean_utility", Better::Higher, |r| Some(r.mean_utility)),
];

/// Median and MAD of one metric for one method, with the method's rank
/// among all methods (1 = best median; ties share the better rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub method: String,
    pub n: usize,
    pub median: f64,
    pub mad: f64,
    pub rank: usize,
}

pub fn comparison_rows(runs: &[RunSummary]) -> Vec<ComparisonRow> {
    let rows: Vec<SummaryRow> = runs.iter().map(SummaryRow::from).collect();
    comparison_from_rows(&rows)
}

pub fn comparison_from_rows(rows: &[SummaryRow]) -> Vec<ComparisonRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for &(metric, better, get) in METRICS {
        let mut stats: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
        for &m in &order {
            let vals: Vec<f64> = rows.iter().filter(|r| r.method == m).filter_map(get).collect();
            if let (Some(med), Some(d)) = (median(&vals), mad(&vals)) {
                stats.insert(m, (vals.len(), med, d));
            }
        }
        for &m in &order {
            let Some(&(n, med, d)) = stats.get(m) else { continue };
            let rank = 1 + stats
                .values()
                .filter(|&&(_, other, _)| match better {
                    Better::Lower => other < med,
                    Better::Higher => other > med,
                })
                .count();
            out.push(ComparisonRow {
                metric: metric.to_string(),
                method: m.to_string(),
                n,
                median: med,
                mad: d,
                rank,
            });
        }
    }
    out
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table of a comparison.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let mw = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let kw = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<kw$}  {:<mw$}  {:>3}  {:>14}  {:>12}  {:>4}",
        "metric", "method", "n", "median", "mad", "rank"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<kw$}  {:<mw$}  {:>3}  {:>14.6}  {:>12.6}  {:>4}",
            r.metric, r.method, r.n, r.median, r.mad, r.rank
        );
    }
    s
}

/// Read `summary.csv` (a file, or a directory holding one), write
/// `report.csv` next to it and return the rendered table.
pub fn report(input: &Path) -> Result<(Vec<ComparisonRow>, String)> {
    let csv_path = if input.is_dir() {
        input.join("summary.csv")
    } else {
        input.to_path_buf()
    };
    if !csv_path.exists() {
        return Err(Error::config("report", format!("{} does not exist", csv_path.display())));
    }
    let rows = read_summary_csv(&csv_path)?;
    let cmp = comparison_from_rows(&rows);
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    write_comparison(&dir.join("report.csv"), &cmp)?;
    Ok((cmp.clone(), render_table(&cmp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SuccessRate;

    fn summary(method: &str, seed: u64, ep90: Option<u64>, regret: f64) -> RunSummary {
        RunSummary {
            method: method.into(),
            seed,
            episodes: 100,
            episodes_to_90: ep90,
            capability_episodes_to_90: None,
            final_v_max: [3.0, 1.0, 2.0],
            final_v_cap: Some(2.5),
            mean_cot: None,
            stability: Some(0.5),
            success: SuccessRate::from_counts(40, 100).unwrap(),
            cumulative_regret: regret,
            mean_utility: 0.6,
            clipped_updates: 0,
        }
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![summary("a", 0, Some(10), 1.5), summary("b", 1, None, 0.25)];
        let p = dir.path().join("summary.csv");
        write_summary_csv(&p, &runs).unwrap();
        let back = read_summary_csv(&p).unwrap();
        let want: Vec<SummaryRow> = runs.iter().map(SummaryRow::from).collect();
        assert_eq!(back, want);
    }

    #[test]
    fn medians_mads_and_ranks() {
        let runs = vec![
            summary("a", 0, Some(10), 3.0),
            summary("a", 1, Some(20), 1.0),
            summary("a", 2, None, 2.0),
            summary("b", 0, Some(5), 9.0),
            summary("b", 1, Some(7), 9.0),
        ];
        let rows = comparison_rows(&runs);
        let get = |metric: &str, m: &str| rows.iter().find(|r| r.metric == metric && r.method == m).unwrap().clone();
        // a: {10, 20, 101} -> median 20, deviations {10, 0, 81} -> mad 10
        let a = get("episodes_to_90", "a");
        assert_eq!((a.n, a.median, a.mad, a.rank), (3, 20.0, 10.0, 2));
        let b = get("episodes_to_90", "b");
        assert_eq!((b.median, b.mad, b.rank), (6.0, 1.0, 1));
        assert_eq!(get("cumulative_regret", "a").rank, 1);
        // Equal medians share a rank.
        assert_eq!(get("success_rate", "a").rank, 1);
        assert_eq!(get("success_rate", "b").rank, 1);
        assert!(rows.iter().all(|r| r.metric != "mean_cot"));
        // Capability never reached: censored at budget + 1.
        assert_eq!(get("capability_episodes_to_90", "a").median, 101.0);
    }

    #[test]
    fn report_reads_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_summary_csv(&dir.path().join("summary.csv"), &[summary("a", 0, Some(3), 1.0)]).unwrap();
        let (rows, table) = report(dir.path()).unwrap();
        assert!(!rows.is_empty());
        assert!(table.contains("episodes_to_90"));
        assert!(dir.path().join("report.csv").exists());
        assert!(report(&dir.path().join("missing.csv")).is_err());
    }
}

//! Aggregated tables and plot data from a results store.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::runner::{read_store, StoreRecord, RESULTS_FILE};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_seeds, AggregateResult, RunResult};

pub const SUMMARY_FILE: &str = "summary.md";
pub const PLOT_FILE: &str = "plot_data.csv";

/// Per-group aggregates, ordered by dataset, method and missing probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub groups: Vec<AggregateResult>,
    pub failures: usize,
}

impl Report {
    pub fn from_results(results: &[RunResult], failures: usize) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::Invalid(
                "results store holds no successful runs".into(),
            ));
        }
        let mut groups: BTreeMap<(String, crate::hyper::Method, u64), Vec<RunResult>> =
            BTreeMap::new();
        for r in results {
            groups
                .entry((r.dataset.clone(), r.method, r.missing_p.to_bits()))
                .or_default()
                .push(r.clone());
        }
        let mut out = groups
            .values()
            .map(|g| aggregate_seeds(g))
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| {
            (&a.dataset, a.method)
                .cmp(&(&b.dataset, b.method))
                .then(a.missing_p.total_cmp(&b.missing_p))
        });
        Ok(Report {
            groups: out,
            failures,
        })
    }

    pub fn from_store(path: &Path) -> Result<Self> {
        let records = read_store(path)?;
        let mut results = Vec::new();
        let mut failures = 0;
        for rec in records {
            match rec {
                StoreRecord::Ok(r) => results.push(r),
                StoreRecord::Failed(_) => failures += 1,
            }
        }
        Self::from_results(&results, failures)
    }

    /// One markdown table per dataset: methods as rows, missing probabilities as columns.
    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let mut datasets: Vec<&str> = self.groups.iter().map(|g| g.dataset.as_str()).collect();
        datasets.dedup();
        for ds in datasets {
            let rows: Vec<&AggregateResult> =
                self.groups.iter().filter(|g| g.dataset == ds).collect();
            let mut ps: Vec<f64> = rows.iter().map(|g| g.missing_p).collect();
            ps.sort_by(f64::total_cmp);
            ps.dedup();
            let _ = writeln!(out, "## {ds}\n");
            out.push_str("| Method |");
            for p in &ps {
                let _ = write!(out, " p = {p} |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(ps.len()));
            out.push('\n');
            let mut methods: Vec<_> = rows.iter().map(|g| g.method).collect();
            methods.dedup();
            for m in methods {
                let _ = write!(out, "| {} |", m.display_name());
                for p in &ps {
                    match rows.iter().find(|g| g.method == m && g.missing_p == *p) {
                        Some(g) => {
                            let _ = write!(out, " {} |", g.cell());
                        }
                        None => out.push_str(" – |"),
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if self.failures > 0 {
            let _ = writeln!(
                out,
                "{} run(s) failed; see the results store.",
                self.failures
            );
        }
        out
    }

    pub fn plot_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dataset",
            "method",
            "missing_p",
            "mean_rmse",
            "std_rmse",
            "n_seeds",
        ])?;
        for g in &self.groups {
            w.write_record([
                g.dataset.clone(),
                g.method.to_string(),
                g.missing_p.to_string(),
                g.mean_rmse.to_string(),
                g.std_rmse.to_string(),
                g.n_seeds.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `summary.md` and `plot_data.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join(SUMMARY_FILE);
        fs::write(&summary, self.markdown()).map_err(|e| Error::io(&summary, e))?;
        let plot = dir.join(PLOT_FILE);
        fs::write(&plot, self.plot_csv()?).map_err(|e| Error::io(&plot, e))
    }
}

/// Reads `results.jsonl` in `run_dir` and writes the report next to it.
pub fn report_run(run_dir: &Path) -> Result<Report> {
    let report = Report::from_store(&run_dir.join(RESULTS_FILE))?;
    report.write(run_dir)?;
    Ok(report)
}

//! Run reports and their serialization.
//!
//! `report.json` and `report.csv` hold only values that are a function of the
//! configuration, so repeated offline runs write identical bytes. Wall-clock
//! timings and fresh/cached call counts go to `run_meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FailureKind, PipelineError};
use crate::llm::CallStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedError {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Test accuracy in [0, 1]; absent when the seed failed.
    pub accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Size of the selected important-node set.
    pub selected: usize,
    /// Pairs sent to the edge judge, `C(selected, 2)`.
    pub judged_pairs: usize,
    pub retries: usize,
    pub fallbacks: usize,
    pub error: Option<SeedError>,
}

impl SeedResult {
    pub fn failed(seed: u64, err: &PipelineError) -> Self {
        Self {
            seed,
            accuracy: None,
            val_accuracy: None,
            best_epoch: None,
            selected: 0,
            judged_pairs: 0,
            retries: 0,
            fallbacks: 0,
            error: Some(SeedError {
                kind: err.kind(),
                message: err.to_string(),
            }),
        }
    }
}

/// Non-deterministic bookkeeping kept out of the main report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Seconds per stage, keyed by seed then stage name.
    pub timings: BTreeMap<u64, BTreeMap<String, f64>>,
    pub llm_calls: CallStats,
    /// Stage artifacts served from the cache, e.g. `"42/augment"`.
    pub cache_hits: Vec<String>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: String,
    pub dataset: String,
    pub variant: String,
    pub model: String,
    pub sparsity: f64,
    pub seeds: Vec<SeedResult>,
    /// Mean test accuracy over successful seeds, in [0, 1].
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 with a single successful seed.
    pub std: Option<f64>,
    pub partial: bool,
    #[serde(skip)]
    pub meta: RunMeta,
}

/// `ratio` as a percentage without trailing zeros: 0.8 -> "80%".
pub fn percent(ratio: f64) -> String {
    let p = (ratio * 100.0 * 1e6).round() / 1e6;
    format!("{p}%")
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

impl RunReport {
    pub fn new(dataset: String, variant: String, model: String, sparsity: f64, seeds: Vec<SeedResult>, meta: RunMeta) -> Self {
        let accs: Vec<f64> = seeds.iter().filter_map(|s| s.accuracy).collect();
        let stats = mean_std(&accs);
        let partial = accs.len() < seeds.len();
        let score = match stats {
            Some((m, s)) => format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s),
            None => "no successful seeds".into(),
        };
        let header = format!(
            "{dataset} | sparsity {} | {variant} ({model}) | {score}{}",
            percent(sparsity),
            if partial { " | PARTIAL" } else { "" }
        );
        Self {
            header,
            dataset,
            variant,
            model,
            sparsity,
            seeds,
            mean: stats.map(|s| s.0),
            std: stats.map(|s| s.1),
            partial,
            meta,
        }
    }

    /// First failure among the seeds, if any.
    pub fn first_failure(&self) -> Option<FailureKind> {
        self.seeds.iter().find_map(|s| s.error.as_ref().map(|e| e.kind))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per seed followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> Result<String, PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| PipelineError::Report(e.to_string());
        w.write_record(["seed", "accuracy", "val_accuracy", "best_epoch", "selected", "judged_pairs", "retries", "fallbacks", "error"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for s in &self.seeds {
            w.write_record([
                s.seed.to_string(),
                opt(s.accuracy),
                opt(s.val_accuracy),
                s.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
                s.selected.to_string(),
                s.judged_pairs.to_string(),
                s.retries.to_string(),
                s.fallbacks.to_string(),
                s.error.as_ref().map(|e| e.message.clone()).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        let blank = || std::iter::repeat_n(String::new(), 7);
        let row = |name: &str, v: Option<f64>| std::iter::once(name.to_string()).chain(std::iter::once(opt(v))).chain(blank()).collect::<Vec<_>>();
        w.write_record(row("mean", self.mean)).map_err(err)?;
        w.write_record(row("std", self.std)).map_err(err)?;
        let bytes = w.into_inner().map_err(|e| PipelineError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(PipelineError::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// Writes `report.json` or `report.csv` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Json => fs::write(dir.join("report.json"), report.to_json())?,
        ReportFormat::Csv => fs::write(dir.join("report.csv"), report.to_csv()?)?,
    }
    Ok(())
}

pub fn write_meta(meta: &RunMeta, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(dir.join("run_meta.json"), text + "\n")?;
    Ok(())
}

/// Summary table with one `(key, mean, std)` row per report, plus long-format
/// `(key, seed, accuracy)` rows for plotting.
pub fn write_summary_tables(
    dir: &Path,
    key_name: &str,
    rows: &[(String, &RunReport)],
    summary_file: &str,
    long_file: &str,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    let err = |e: csv::Error| PipelineError::Report(e.to_string());
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([key_name, "mean", "std"]).map_err(err)?;
    let mut long = csv::Writer::from_writer(Vec::new());
    long.write_record([key_name, "seed", "accuracy"]).map_err(err)?;
    for (key, r) in rows {
        summary.write_record([key.clone(), opt(r.mean), opt(r.std)]).map_err(err)?;
        for s in &r.seeds {
            long.write_record([key.clone(), s.seed.to_string(), opt(s.accuracy)]).map_err(err)?;
        }
    }
    for (w, name) in [(summary, summary_file), (long, long_file)] {
        let bytes = w.into_inner().map_err(|e| PipelineError::Report(e.to_string()))?;
        let mut f = fs::File::create(dir.join(name))?;
        f.write_all(&bytes)?;
    }
    Ok(())
}

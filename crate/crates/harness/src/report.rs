//! Evaluation reports.
//!
//! The CSV form has `#`-prefixed header lines followed by one row per run
//! with the fixed columns
//! `target,variant,n,n_train,s,seed,lambda,sigma,mae,train_seconds,predict_seconds,status`.
//! Skipped runs leave the measurement columns empty and explain themselves
//! in `status`. The JSON form carries the same header, rows and the
//! per-group spread summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const STATUS_OK: &str = "ok";
pub const STATUS_SKIPPED_CEILING: &str = "skipped: ceiling";
pub const STATUS_SKIPPED_SIZE: &str = "skipped: s exceeds n_train";

pub const CSV_COLUMNS: [&str; 12] = [
    "target",
    "variant",
    "n",
    "n_train",
    "s",
    "seed",
    "lambda",
    "sigma",
    "mae",
    "train_seconds",
    "predict_seconds",
    "status",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub target: String,
    pub variant: String,
    pub n: usize,
    pub n_train: usize,
    pub s: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub mae: Option<f64>,
    pub train_seconds: Option<f64>,
    pub predict_seconds: Option<f64>,
    pub status: String,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub study: String,
    pub dataset: String,
    pub train_fraction: f64,
    pub seed: u64,
    pub hyper: Vec<HyperEntry>,
    pub notes: Vec<String>,
}

/// Hyperparameters used by one variant and landmark count. `variant` is
/// `all` when a single tuning pass served every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperEntry {
    pub variant: String,
    pub s: Option<usize>,
    pub lambda: f64,
    pub sigma: f64,
    /// Dataset size at which the values were chosen; `None` when fixed by
    /// configuration.
    pub tuned_at_n: Option<usize>,
    /// Landmarks per fold during cross-validation; `None` for exact solves.
    pub cv_landmarks: Option<usize>,
}

/// Min, median and max MAE over the runs of one (target, variant, n, s) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSummary {
    pub target: String,
    pub variant: String,
    pub n_train: usize,
    pub s: Option<usize>,
    pub runs: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// `(max - min) / median`.
    pub spread: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<SpreadSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

type GroupKey = (String, String, usize, Option<usize>);

fn groups(rows: &[ReportRow]) -> BTreeMap<GroupKey, Vec<&ReportRow>> {
    let mut map: BTreeMap<GroupKey, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        map.entry((r.target.clone(), r.variant.clone(), r.n_train, r.s))
            .or_default()
            .push(r);
    }
    map
}

/// Spread summaries of every group with at least one completed run.
pub fn summarize(rows: &[ReportRow]) -> Vec<SpreadSummary> {
    groups(rows)
        .into_iter()
        .filter_map(|((target, variant, n_train, s), rs)| {
            let maes: Vec<f64> = rs.iter().filter_map(|r| r.mae).collect();
            if maes.is_empty() {
                return None;
            }
            let min = maes.iter().copied().fold(f64::INFINITY, f64::min);
            let max = maes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let med = median(&maes);
            Some(SpreadSummary {
                target,
                variant,
                n_train,
                s,
                runs: maes.len(),
                min,
                median: med,
                max,
                spread: if med > 0.0 { (max - min) / med } else { 0.0 },
            })
        })
        .collect()
}

impl EvalReport {
    pub fn new(header: ReportHeader, rows: Vec<ReportRow>) -> Self {
        let summaries = summarize(&rows);
        Self {
            header,
            rows,
            summaries,
        }
    }

    pub fn summary(&self, target: &str, variant: &str, s: Option<usize>) -> Option<&SpreadSummary> {
        self.summaries
            .iter()
            .find(|x| x.target == target && x.variant == variant && x.s == s)
    }

    fn header_lines(&self) -> Result<Vec<String>> {
        let h = serde_json::to_value(&self.header)?;
        let obj = h.as_object().expect("header serializes to an object");
        Ok(obj.iter().map(|(k, v)| format!("# {k}: {v}")).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        for line in self.header_lines()? {
            writeln!(out, "{line}")?;
        }
        let mut w = csv::Writer::from_writer(&mut out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_COLUMNS)?;
        }
        w.flush()?;
        drop(w);
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    /// Writes `<path>` as CSV and the same path with a `.json` extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let csv_path = path.as_ref().to_path_buf();
        if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let json_path = csv_path.with_extension("json");
        fs::write(&csv_path, self.to_csv()?)?;
        fs::write(&json_path, serde_json::to_string_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

/// Reads the header lines and rows of a CSV report.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<ReportRow>)> {
    let file = fs::File::open(path.as_ref())?;
    let header = BufReader::new(file)
        .lines()
        .map_while(|l| l.ok())
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
    Ok((header, rows))
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

/// Markdown summary of a CSV report: header notes, one line per group with
/// MAE statistics and median timings, and the skipped runs.
pub fn render_markdown(header: &[String], rows: &[ReportRow]) -> String {
    let mut md = String::from("# Evaluation summary\n\n");
    for h in header {
        md.push_str(&format!("- {h}\n"));
    }
    md.push_str("\n| target | variant | n_train | s | runs | median MAE | min MAE | max MAE | spread | median train s | median predict s |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    let summaries = summarize(rows);
    let timings = groups(rows);
    for s in &summaries {
        let key = (s.target.clone(), s.variant.clone(), s.n_train, s.s);
        let rs = &timings[&key];
        let train: Vec<f64> = rs.iter().filter_map(|r| r.train_seconds).collect();
        let predict: Vec<f64> = rs.iter().filter_map(|r| r.predict_seconds).collect();
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.3} | {:.4} | {:.4} |\n",
            s.target,
            s.variant,
            s.n_train,
            fmt_opt(s.s),
            s.runs,
            s.median,
            s.min,
            s.max,
            s.spread,
            median(&train),
            median(&predict),
        ));
    }
    let skipped: Vec<&ReportRow> = rows.iter().filter(|r| !r.is_ok()).collect();
    if !skipped.is_empty() {
        md.push_str("\n| target | variant | n_train | s | seed | status |\n|---|---|---|---|---|---|\n");
        for r in skipped {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                r.target,
                r.variant,
                r.n_train,
                fmt_opt(r.s),
                fmt_opt(r.seed),
                r.status
            ));
        }
    }
    md
}

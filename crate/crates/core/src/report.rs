//! Rendering and persistence of evaluation runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evaluator::{EvaluationRun, RowResult};
use crate::model::{Metric, MetricStats};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed run document: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const RUN_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.json";
pub const DETAIL_FILE: &str = "detail.csv";
pub const AGGREGATE_CSV_FILE: &str = "aggregate.csv";
pub const AGGREGATE_TXT_FILE: &str = "aggregate.txt";

/// Statistic rows of an aggregate block, in table order.
pub const STATISTICS: [&str; 4] = ["max", "mean", "std", "min"];

fn stat(stats: &MetricStats, name: &str) -> Option<f64> {
    match name {
        "max" => stats.max,
        "mean" => stats.mean,
        "std" => stats.std,
        "min" => stats.min,
        _ => unreachable!("unknown statistic {name}"),
    }
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Table-style summary: one block per tool with max/mean/std/min rows and a
/// trailing row counting MISSING values per metric.
pub fn render_aggregate_text(run: &EvaluationRun) -> String {
    let mut header = vec!["tool".to_owned(), "statistic".to_owned()];
    header.extend(Metric::ALL.iter().map(|m| m.column().to_owned()));

    let mut body: Vec<Vec<String>> = Vec::new();
    for summary in &run.summaries {
        let Some(agg) = &summary.aggregate else {
            body.push(vec![summary.tool_name.clone(), "no successful suite".into()]);
            continue;
        };
        for (i, name) in STATISTICS.iter().enumerate() {
            let mut line = vec![if i == 0 { summary.tool_name.clone() } else { String::new() }, (*name).to_owned()];
            line.extend(Metric::ALL.iter().map(|m| fixed(stat(agg.get(*m), name))));
            body.push(line);
        }
        let mut line = vec![String::new(), "missing".to_owned()];
        line.extend(Metric::ALL.iter().map(|m| agg.get(*m).missing.to_string()));
        body.push(line);
    }

    let n_cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for line in &body {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "Performance Metrics Statistics (N={})", run.n_suites());
    let fmt_line = |out: &mut String, cells: &[String]| {
        let mut line = String::new();
        for (i, w) in widths.iter().enumerate().take(n_cols) {
            let cell = cells.get(i).map(String::as_str).unwrap_or("");
            if i < 2 {
                let _ = write!(line, "{cell:<w$}  ");
            } else {
                let _ = write!(line, "{cell:>w$}  ");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    fmt_line(&mut out, &header);
    for line in &body {
        fmt_line(&mut out, line);
    }
    let failed: Vec<String> = run
        .summaries
        .iter()
        .filter_map(|s| {
            let failed = run.rows_for(&s.tool_name).filter(|r| r.is_failed()).count();
            (failed > 0).then(|| format!("{}: {failed} failed suite(s)", s.tool_name))
        })
        .collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "failures: {}", failed.join("; "));
    }
    out
}

pub fn render_aggregate_csv(run: &EvaluationRun) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tool", "statistic"];
    header.extend(Metric::ALL.iter().map(|m| m.column()));
    header.push("n_suites");
    w.write_record(&header)?;
    for summary in &run.summaries {
        let Some(agg) = &summary.aggregate else {
            continue;
        };
        for name in STATISTICS {
            let mut rec = vec![summary.tool_name.clone(), name.to_owned()];
            rec.extend(Metric::ALL.iter().map(|m| fixed(stat(agg.get(*m), name))));
            rec.push(agg.n_suites.to_string());
            w.write_record(&rec)?;
        }
        let mut rec = vec![summary.tool_name.clone(), "missing".to_owned()];
        rec.extend(Metric::ALL.iter().map(|m| agg.get(*m).missing.to_string()));
        rec.push(agg.n_suites.to_string());
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (tool, suite); MISSING values are empty fields.
pub fn render_detail_csv(rows: &[RowResult]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tool", "suite"];
    header.extend(Metric::ALL.iter().map(|m| m.column()));
    header.extend(["diversity_std", "failure_reason"]);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.tool_name.clone(), row.suite_id.clone()];
        match &row.metrics {
            Some(m) => {
                rec.extend(Metric::ALL.iter().map(|metric| opt(m.value(*metric))));
                rec.push(opt(m.diversity_std));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), Metric::ALL.len() + 1)),
        }
        rec.push(row.failure.as_ref().map(|f| f.reason()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is utf-8"))
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, contents).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("run serializes");
    s.push('\n');
    s
}

/// Writes the run document, the config snapshot, the detail table and the
/// aggregate tables into `out_dir`.
pub fn persist_run(run: &EvaluationRun, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ReportError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_owned(), source })?;
    Ok(vec![
        write(dir.join(RUN_FILE), &to_json(run))?,
        write(dir.join(CONFIG_FILE), &to_json(&run.config))?,
        write(dir.join(DETAIL_FILE), &render_detail_csv(&run.rows)?)?,
        write(dir.join(AGGREGATE_CSV_FILE), &render_aggregate_csv(run)?)?,
        write(dir.join(AGGREGATE_TXT_FILE), &render_aggregate_text(run))?,
    ])
}

pub fn load_run(path: impl AsRef<Path>) -> Result<EvaluationRun, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Parse { path: path.to_owned(), source })
}

/// Keys holding wall-clock derived values anywhere in a run document or
/// table. Everything else is a pure function of the inputs and seeds.
pub const TIMING_KEYS: [&str; 3] = ["time_to_initialize", "time_to_select_tests", "timing"];

/// Copy of a run document with every timing field removed.
pub fn strip_timing(value: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => Value::Object(
            map.iter()
                .filter(|(k, _)| !TIMING_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), strip_timing(v)))
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.iter().map(strip_timing).collect()),
        other => other.clone(),
    }
}

use std::fmt::Write;

use serde::Serialize;

use super::{BenchError, CellResult};
use crate::soup::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

/// Aggregate of one cell over its successful repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub label: String,
    pub method: Method,
    pub runs: usize,
    pub acc_mean: f64,
    /// Sample standard deviation (n − 1); `None` with fewer than two runs.
    pub acc_std: Option<f64>,
    pub val_mean: f64,
    pub seconds: f64,
    pub peak_bytes: f64,
    pub forward_passes: f64,
    pub backward_passes: f64,
    pub mean_nodes_per_pass: f64,
}

impl ResultRow {
    pub fn peak_mb(&self) -> f64 {
        self.peak_bytes / 1e6
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the (n − 1) denominator.
pub(crate) fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

impl ResultTable {
    /// One row per cell with at least one successful repetition.
    pub fn from_cells(cells: &[CellResult]) -> Self {
        let rows = cells
            .iter()
            .filter(|c| !c.reps.is_empty())
            .map(|c| {
                let col = |f: &dyn Fn(&super::RepResult) -> f64| {
                    c.reps.iter().map(f).collect::<Vec<f64>>()
                };
                let accs = col(&|r| r.test_acc);
                ResultRow {
                    label: c.label.clone(),
                    method: c.method,
                    runs: c.reps.len(),
                    acc_mean: mean(&accs),
                    acc_std: sample_std(&accs),
                    val_mean: mean(&col(&|r| r.val_acc)),
                    seconds: mean(&col(&|r| r.wall_seconds)),
                    peak_bytes: mean(&col(&|r| r.counters.peak_tracked_bytes as f64)),
                    forward_passes: mean(&col(&|r| r.counters.forward_passes as f64)),
                    backward_passes: mean(&col(&|r| r.counters.backward_passes as f64)),
                    mean_nodes_per_pass: mean(&col(&|r| r.counters.mean_nodes_per_pass())),
                }
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn fmt_std(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"))
}

/// Renders the table with columns method, acc mean, acc std, seconds,
/// peak MB, fwd, bwd. Markdown bolds the best mean accuracy and the lowest
/// time (every row that ties).
pub fn emit_table(table: &ResultTable, format: Format) -> Result<String, BenchError> {
    if table.rows.is_empty() {
        return Err(BenchError::EmptyTable);
    }
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str("method,acc_mean,acc_std,seconds,peak_mb,fwd,bwd\n");
            for r in &table.rows {
                let std = r.acc_std.map_or(String::new(), |s| format!("{s:.6}"));
                writeln!(
                    out,
                    "{},{:.6},{},{:.6},{:.6},{},{}",
                    r.label,
                    r.acc_mean,
                    std,
                    r.seconds,
                    r.peak_mb(),
                    r.forward_passes,
                    r.backward_passes
                )
                .expect("write to string");
            }
        }
        Format::Markdown => {
            let best_acc = table
                .rows
                .iter()
                .map(|r| r.acc_mean)
                .fold(f64::NEG_INFINITY, f64::max);
            let best_time = table
                .rows
                .iter()
                .map(|r| r.seconds)
                .fold(f64::INFINITY, f64::min);
            let bold = |s: String, on: bool| if on { format!("**{s}**") } else { s };
            out.push_str("| method | acc mean | acc std | seconds | peak MB | fwd | bwd |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for r in &table.rows {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {:.3} | {} | {} |",
                    r.label,
                    bold(format!("{:.4}", r.acc_mean), r.acc_mean == best_acc),
                    fmt_std(r.acc_std),
                    bold(format!("{:.3}", r.seconds), r.seconds == best_time),
                    r.peak_mb(),
                    r.forward_passes,
                    r.backward_passes
                )
                .expect("write to string");
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub method: Method,
    /// Baseline seconds / row seconds.
    pub speedup: f64,
    /// Row peak / baseline peak.
    pub memory_ratio: f64,
}

/// Speedup and memory ratio of every row relative to the first row of
/// `baseline`.
pub fn speedup_and_memory_summary(
    table: &ResultTable,
    baseline: Method,
) -> Result<Vec<Summary>, BenchError> {
    let base = table
        .row(baseline)
        .ok_or_else(|| BenchError::MissingBaseline(baseline.to_string()))?;
    Ok(table
        .rows
        .iter()
        .map(|r| Summary {
            label: r.label.clone(),
            method: r.method,
            speedup: base.seconds / r.seconds,
            memory_ratio: r.peak_bytes / base.peak_bytes,
        })
        .collect())
}

//! Experiment runner: one shared ingredient pool, every cell (method +
//! config) souped `reps` times, aggregated into a [`ResultTable`].
//!
//! Memory figures are the tensor allocation counter's high-water mark
//! (bytes of live tensor data), not process RSS.

mod plan;
mod table;

pub use plan::{Cell, CellConfig, ExperimentPlan, GraphSource, IngredientPlan, ModelPlan};
pub use table::{emit_table, speedup_and_memory_summary, Format, ResultRow, ResultTable, Summary};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::gnn::{evaluate, save_checkpoint, GnnError, ModelInput, ModelSpec};
use crate::graph::{partition, CsrGraph, GraphData, GraphError, Split};
use crate::ingredients::{save_ingredients, train_population, IngredientError};
use crate::rng;
use crate::soup::{
    gis_soup, greedy_soup, learned_soup, pls_soup, uniform_soup, LsConfig, Method, PassCounters,
    PlsConfig, SoupError, SoupReport,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("empty table")]
    EmptyTable,
    #[error("baseline {0} is not in the table")]
    MissingBaseline(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Ingredients(#[from] IngredientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One souping run inside a cell.
#[derive(Debug, Clone, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub wall_seconds: f64,
    pub counters: PassCounters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub label: String,
    pub method: Method,
    pub reps: Vec<RepResult>,
    /// Failures, as `"rep {r}: {error}"`; the other reps still ran.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngredientSummary {
    pub val_accs: Vec<f64>,
    pub test_accs: Vec<f64>,
    pub train_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub test_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub plan: ExperimentPlan,
    pub spec: ModelSpec,
    pub ingredients: IngredientSummary,
    pub cells: Vec<CellResult>,
    pub table: ResultTable,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub summary: Vec<Summary>,
}

/// Seed of repetition `rep` of cell `cell`.
pub fn soup_seed(plan_seed: u64, cell: usize, rep: usize) -> u64 {
    rng::mix(&[plan_seed, cell as u64, rep as u64, 0x50c9])
}

fn run_cell(
    cell: &Cell,
    members: &[crate::gnn::ModelParams],
    graph: &CsrGraph,
    seed: u64,
) -> Result<SoupReport, SoupError> {
    let c = &cell.config;
    let ls = LsConfig {
        alpha_seed: seed,
        ..c.ls
    };
    match cell.method {
        Method::Uniform => uniform_soup(members, graph),
        Method::Greedy => greedy_soup(members, graph),
        Method::Gis => gis_soup(members, graph, c.granularity),
        Method::Ls => learned_soup(members, graph, &ls),
        Method::Pls => {
            let parts = partition(graph, c.k, seed)?;
            pls_soup(
                members,
                graph,
                &parts,
                &PlsConfig {
                    ls,
                    k: c.k,
                    r: c.r,
                    score_interval: c.score_interval,
                },
            )
        }
    }
}

/// Runs every cell of `plan`. With `out` set, writes the ingredient pool,
/// one checkpoint per soup, `table.csv`, `table.md` and `report.json` there.
pub fn run_plan(plan: &ExperimentPlan, out: Option<&Path>) -> Result<BenchReport, BenchError> {
    plan.validate()?;
    let graph = plan.graph.build()?;
    let spec = plan.model.spec(graph.feat_dim(), graph.num_classes());
    spec.validate()?;

    let started = Instant::now();
    let pool = train_population(
        &graph,
        &spec,
        &plan.ingredients.train,
        plan.ingredients.n,
        plan.ingredients.workers,
    )?;
    let pool_seconds = started.elapsed().as_secs_f64();
    let input = ModelInput::new(&graph, spec.arch);
    let test_accs = pool
        .members
        .iter()
        .map(|m| evaluate(m, &input, Split::Test))
        .collect::<Result<Vec<_>, _>>()?;
    drop(input);
    let ingredients = IngredientSummary {
        test_mean: test_accs.iter().sum::<f64>() / test_accs.len() as f64,
        val_accs: pool.val_accs.clone(),
        test_accs,
        train_seconds: pool.train_times.clone(),
        wall_seconds: pool_seconds,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        save_ingredients(
            &pool,
            &plan.ingredients.train,
            plan.ingredients.workers,
            dir.join("ingredients"),
        )?;
    }

    let mut cells = Vec::with_capacity(plan.cells.len());
    for (ci, cell) in plan.cells.iter().enumerate() {
        let label = cell.label();
        let mut result = CellResult {
            label: label.clone(),
            method: cell.method,
            reps: Vec::new(),
            errors: Vec::new(),
        };
        for rep in 0..plan.reps {
            let seed = soup_seed(plan.seed, ci, rep);
            match run_cell(cell, &pool.members, &graph, seed) {
                Ok(report) => {
                    let checkpoint = match out {
                        Some(dir) => {
                            let name = format!("soup_{ci:02}_{}_rep{rep}.gskp", file_safe(&label));
                            save_checkpoint(&report.result, dir.join(&name))?;
                            Some(name)
                        }
                        None => None,
                    };
                    result.reps.push(RepResult {
                        rep,
                        seed,
                        val_acc: report.val_acc,
                        test_acc: report.test_acc,
                        wall_seconds: report.wall_seconds,
                        counters: report.counters,
                        checkpoint,
                    });
                }
                Err(e) => result.errors.push(format!("rep {rep}: {e}")),
            }
        }
        cells.push(result);
    }

    let table = ResultTable::from_cells(&cells);
    let summary = if table.rows.iter().any(|r| r.method == plan.baseline) {
        speedup_and_memory_summary(&table, plan.baseline)?
    } else {
        Vec::new()
    };
    let report = BenchReport {
        plan: plan.clone(),
        spec,
        ingredients,
        cells,
        table,
        summary,
    };
    if let Some(dir) = out {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_outputs(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let files = [
        ("table.csv", emit_table(&report.table, Format::Csv)?),
        ("table.md", emit_table(&report.table, Format::Markdown)?),
        ("report.json", serde_json::to_string_pretty(report)?),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

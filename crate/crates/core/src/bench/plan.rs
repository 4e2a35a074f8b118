use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::gnn::{Arch, ModelSpec};
use crate::graph::{generate_sbm, load_graph, CsrGraph, GraphError, SbmParams};
use crate::ingredients::{Optimizer, TrainConfig};
use crate::soup::{LsConfig, Method, PlsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSource {
    Path(PathBuf),
    Sbm(SbmParams),
}

impl GraphSource {
    pub fn build(&self) -> Result<CsrGraph, GraphError> {
        match self {
            GraphSource::Path(p) => load_graph(p),
            GraphSource::Sbm(params) => generate_sbm(params),
        }
    }
}

/// Architecture without the graph-dependent input and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPlan {
    pub arch: Arch,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f32,
}

impl Default for ModelPlan {
    fn default() -> Self {
        Self {
            arch: Arch::Gcn,
            layers: 2,
            hidden: 64,
            dropout: 0.5,
        }
    }
}

impl ModelPlan {
    pub fn spec(&self, in_dim: usize, out_dim: usize) -> ModelSpec {
        ModelSpec {
            arch: self.arch,
            num_layers: self.layers,
            in_dim,
            hidden_dim: self.hidden,
            out_dim,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngredientPlan {
    pub n: usize,
    pub workers: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for IngredientPlan {
    fn default() -> Self {
        Self {
            n: 10,
            workers: std::thread::available_parallelism()
                .map_or(1, |p| p.get())
                .min(4),
            train: TrainConfig {
                epochs: 100,
                lr: 0.01,
                weight_decay: 5e-4,
                optimizer: Optimizer::Adam,
                seed_base: 0,
                diversity_jitter: false,
            },
        }
    }
}

/// Per-method settings; each method reads only the fields it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellConfig {
    /// GIS ratio grid size.
    pub granularity: usize,
    #[serde(flatten)]
    pub pls: PlsConfig,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            granularity: 20,
            pls: PlsConfig::default(),
        }
    }
}

impl std::ops::Deref for CellConfig {
    type Target = PlsConfig;
    fn deref(&self) -> &PlsConfig {
        &self.pls
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    #[serde(default)]
    pub config: CellConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Cell {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            config: CellConfig::default(),
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.method.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub graph: GraphSource,
    #[serde(default)]
    pub model: ModelPlan,
    #[serde(default)]
    pub ingredients: IngredientPlan,
    pub cells: Vec<Cell>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Method the speedup / memory summary is relative to.
    #[serde(default = "default_baseline")]
    pub baseline: Method,
}

fn default_reps() -> usize {
    4
}

fn default_baseline() -> Method {
    Method::Gis
}

impl ExperimentPlan {
    /// SBM with 2000 nodes, 7 classes and 64 features; 10 ingredients;
    /// uniform, greedy, GIS (g = 20), learned and partition-learned
    /// (R/K = 8/32) cells with 4 soups each.
    pub fn desk_default(arch: Arch) -> Self {
        let ls = LsConfig {
            epochs: 100,
            ..LsConfig::default()
        };
        let cell = |method| Cell {
            method,
            config: CellConfig {
                granularity: 20,
                pls: PlsConfig {
                    ls,
                    k: 32,
                    r: 8,
                    score_interval: 10,
                },
            },
            label: None,
        };
        Self {
            graph: GraphSource::Sbm(SbmParams {
                nodes: 2000,
                classes: 7,
                p_in: 0.01,
                p_out: 0.001,
                feat_dim: 64,
                ..SbmParams::default()
            }),
            model: ModelPlan {
                arch,
                ..ModelPlan::default()
            },
            ingredients: IngredientPlan::default(),
            cells: [
                Method::Uniform,
                Method::Greedy,
                Method::Gis,
                Method::Ls,
                Method::Pls,
            ]
            .map(cell)
            .to_vec(),
            reps: 4,
            seed: 0,
            baseline: Method::Gis,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.cells.is_empty() {
            return Err(BenchError::InvalidPlan("plan has no cells".into()));
        }
        if self.reps == 0 {
            return Err(BenchError::InvalidPlan("reps must be >= 1".into()));
        }
        if self.ingredients.n == 0 || self.ingredients.workers == 0 {
            return Err(BenchError::InvalidPlan(
                "need at least one ingredient and one worker".into(),
            ));
        }
        self.ingredients.train.validate()?;
        Ok(())
    }
}

//! Souping: combining ingredient parameters into one model.
//!
//! | method | selection signal | cost |
//! |---|---|---|
//! | [`uniform_soup`] | none | no forwards |
//! | [`greedy_soup`] | validation accuracy | `2N` forwards |
//! | [`gis_soup`] | validation accuracy on a ratio grid | `N + (N-1)g` forwards |
//! | [`learned_soup`] | validation loss gradient | `e` forwards + `e` backwards |
//! | [`pls_soup`] | same, on random partition unions | `e` + `e` on subgraphs |
//!
//! Greedy and interpolated selection keep the `>=` acceptance rule: a
//! candidate that leaves validation accuracy unchanged is admitted.

mod alpha;
mod greedy;
mod learned;

pub use alpha::{build_soup, soup_on_tape, AlphaMatrix};
pub use greedy::{gis_soup, greedy_soup, sort_by_val_acc};
pub use learned::{cosine_lr, learned_soup, pls_soup, LsConfig, PlsConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{accuracy, predict, GnnError, ModelInput, ModelParams};
use crate::graph::{GraphError, Split};
use crate::tensor::alloc::PeakMeter;
use crate::tensor::{DenseMat, TensorError};

#[derive(Debug, Error)]
pub enum SoupError {
    #[error("no ingredients")]
    Empty,
    #[error("ingredients are not soup-compatible: {0}")]
    Incompatible(String),
    #[error("invalid soup config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("subgraph at epoch {epoch} has no validation nodes after one re-draw")]
    NoValidation { epoch: usize },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uniform,
    Greedy,
    Gis,
    Ls,
    Pls,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Uniform,
        Method::Greedy,
        Method::Gis,
        Method::Ls,
        Method::Pls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Greedy => "greedy",
            Method::Gis => "gis",
            Method::Ls => "ls",
            Method::Pls => "pls",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown method {s:?} (expected uniform, greedy, gis, ls or pls)")
            })
    }
}

/// Exact operation counts of one souping run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCounters {
    /// Every forward pass the method performs, excluding PLS's periodic
    /// full-graph snapshot scoring (counted in `snapshot_scoring_passes`).
    pub forward_passes: u64,
    pub backward_passes: u64,
    /// Greedy / GIS: forwards that score each ingredient alone.
    pub ingredient_scoring_passes: u64,
    /// Greedy: tentative soups. GIS: interpolation grid points.
    pub interpolation_passes: u64,
    /// PLS with `r < k`: full-graph forwards used only for best-epoch selection.
    pub snapshot_scoring_passes: u64,
    /// Node count of every pass counted in `forward_passes`, in order.
    pub nodes_touched_per_pass: Vec<usize>,
    /// Tracked tensor high-water mark above the run's starting live size.
    pub peak_tracked_bytes: u64,
}

impl PassCounters {
    pub fn mean_nodes_per_pass(&self) -> f64 {
        if self.nodes_touched_per_pass.is_empty() {
            return 0.0;
        }
        self.nodes_touched_per_pass.iter().sum::<usize>() as f64
            / self.nodes_touched_per_pass.len() as f64
    }

    pub(crate) fn forward(&mut self, nodes: usize) {
        self.forward_passes += 1;
        self.nodes_touched_per_pass.push(nodes);
    }
}

/// One line of a run's log: an ingredient decision (greedy, GIS) or an epoch
/// (learned methods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingredient: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Validation accuracy of the candidate evaluated at this step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Validation accuracy of the running (or best-so-far) soup after this step.
    pub soup_val_acc: f64,
}

impl TraceEntry {
    pub(crate) fn new(step: usize, soup_val_acc: f64) -> Self {
        Self {
            step,
            ingredient: None,
            ratio: None,
            val_acc: None,
            loss: None,
            lr: None,
            accepted: None,
            nodes: None,
            soup_val_acc,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SoupReport {
    pub method: Method,
    #[serde(skip)]
    pub result: ModelParams,
    pub val_acc: f64,
    pub test_acc: f64,
    pub wall_seconds: f64,
    pub counters: PassCounters,
    /// Original indices of the ingredients that made it into the soup
    /// (greedy and GIS), in admission order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kept: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<AlphaMatrix>,
    pub trace: Vec<TraceEntry>,
}

pub(crate) fn check_members(members: &[ModelParams]) -> Result<(), SoupError> {
    let first = members.first().ok_or(SoupError::Empty)?;
    if let Some(i) = members.iter().position(|m| !m.is_compatible(first)) {
        return Err(SoupError::Incompatible(format!(
            "ingredient {i} has spec {:?}, ingredient 0 has {:?}",
            members[i].spec(),
            first.spec()
        )));
    }
    Ok(())
}

/// Validation accuracy of `params` on the full graph (one counted forward).
pub(crate) fn score(
    params: &ModelParams,
    input: &ModelInput<'_>,
    counters: &mut PassCounters,
) -> Result<f64, SoupError> {
    let logits = predict(params, input)?;
    counters.forward(input.num_nodes());
    Ok(accuracy(&logits, input.labels(), input.mask(Split::Val))?)
}

/// Uncounted final evaluation on validation and test.
pub(crate) fn final_metrics(
    params: &ModelParams,
    input: &ModelInput<'_>,
) -> Result<(f64, f64), SoupError> {
    let logits = predict(params, input)?;
    let val = accuracy(&logits, input.labels(), input.mask(Split::Val))?;
    let test = accuracy(&logits, input.labels(), input.mask(Split::Test)).unwrap_or(f64::NAN);
    Ok((val, test))
}

/// Entry-wise mean of `members`. Each entry's values are sorted before the
/// `f64` summation, so the result does not depend on member order.
pub fn average(members: &[&ModelParams]) -> Result<ModelParams, SoupError> {
    let first = *members.first().ok_or(SoupError::Empty)?;
    if members.iter().any(|m| !m.is_compatible(first)) {
        return Err(SoupError::Incompatible(
            "cannot average models with different specs".into(),
        ));
    }
    let n = members.len() as f64;
    let mut buf = vec![0f32; members.len()];
    let mut layers = Vec::with_capacity(first.num_layers());
    for (l, groups) in first.layers().iter().enumerate() {
        let mut out = Vec::with_capacity(groups.len());
        for (g, shape) in groups.iter().enumerate() {
            let mut mean = DenseMat::zeros(shape.rows(), shape.cols());
            for (j, v) in mean.data_mut().iter_mut().enumerate() {
                for (b, m) in buf.iter_mut().zip(members) {
                    *b = m.layers()[l][g].data()[j];
                }
                buf.sort_unstable_by(f32::total_cmp);
                *v = (buf.iter().map(|&x| x as f64).sum::<f64>() / n) as f32;
            }
            out.push(mean);
        }
        layers.push(out);
    }
    Ok(ModelParams::new(*first.spec(), layers)?)
}

/// Arithmetic mean of all ingredients; uses the graph only for the final,
/// uncounted evaluation.
pub fn uniform_soup(
    members: &[ModelParams],
    graph: &crate::graph::CsrGraph,
) -> Result<SoupReport, SoupError> {
    check_members(members)?;
    let start = std::time::Instant::now();
    let meter = PeakMeter::start();
    let refs: Vec<&ModelParams> = members.iter().collect();
    let result = average(&refs)?;
    let peak = meter.finish();
    let wall_seconds = start.elapsed().as_secs_f64();
    let input = ModelInput::new(graph, members[0].spec().arch);
    let (val_acc, test_acc) = final_metrics(&result, &input)?;
    Ok(SoupReport {
        method: Method::Uniform,
        result,
        val_acc,
        test_acc,
        wall_seconds,
        counters: PassCounters {
            peak_tracked_bytes: peak,
            ..Default::default()
        },
        kept: (0..members.len()).collect(),
        alphas: None,
        trace: Vec::new(),
    })
}

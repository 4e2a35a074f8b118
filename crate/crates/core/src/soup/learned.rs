use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    build_soup, check_members, final_metrics, soup_on_tape, AlphaMatrix, Method, PassCounters,
    SoupError, SoupReport, TraceEntry,
};
use crate::gnn::{accuracy, forward_tape, predict, Mode, ModelInput, ModelParams};
use crate::graph::{
    assemble_subgraph, choose_partitions, CsrGraph, GraphData, Partitioning, Split,
};
use crate::rng;
use crate::tensor::alloc::PeakMeter;
use crate::tensor::GradTape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsConfig {
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    /// Cosine restart period in epochs.
    pub t0: usize,
    pub alpha_seed: u64,
    /// Per-layer softmax over ingredients; off uses raw alphas as ratios.
    pub simplex: bool,
    /// Fraction of validation nodes withheld from the alpha loss and used
    /// only to pick the best epoch. 0 uses all validation nodes for both.
    pub val_holdout: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.5,
            weight_decay: 0.0,
            t0: 100,
            alpha_seed: 0,
            simplex: true,
            val_holdout: 0.0,
        }
    }
}

impl LsConfig {
    pub fn validate(&self) -> Result<(), SoupError> {
        let bad = |m: String| Err(SoupError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.t0 == 0 {
            return bad("t0 must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.val_holdout) {
            return bad(format!("val holdout {} not in [0, 1)", self.val_holdout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlsConfig {
    #[serde(flatten)]
    pub ls: LsConfig,
    /// Partition count K.
    pub k: usize,
    /// Partitions per epoch R.
    pub r: usize,
    /// Full-graph best-epoch scoring period; 0 never scores and returns the
    /// final alphas. Ignored when `r == k` (every epoch is scored from its
    /// own forward, exactly as in learned souping).
    pub score_interval: usize,
}

impl Default for PlsConfig {
    fn default() -> Self {
        Self {
            ls: LsConfig::default(),
            k: 32,
            r: 8,
            score_interval: 10,
        }
    }
}

/// `base * (1 + cos(pi * (t mod t0) / t0)) / 2`.
pub fn cosine_lr(base: f64, epoch: usize, t0: usize) -> f64 {
    base * (1.0 + (PI * (epoch % t0) as f64 / t0 as f64).cos()) / 2.0
}

/// Splits the validation nodes into (fit, select) masks over the full graph.
fn val_masks(
    graph: &CsrGraph,
    holdout: f64,
    seed: u64,
) -> Result<(Vec<bool>, Vec<bool>), SoupError> {
    let val = graph.mask(Split::Val);
    if holdout == 0.0 {
        return Ok((val.to_vec(), val.to_vec()));
    }
    let mut nodes = graph.split_nodes(Split::Val);
    nodes.shuffle(&mut rng::stream(&[seed, 0x401d]));
    let held = ((nodes.len() as f64) * holdout).round() as usize;
    if held == 0 || held == nodes.len() {
        return Err(SoupError::InvalidConfig(format!(
            "val holdout {holdout} leaves an empty side of {} nodes",
            nodes.len()
        )));
    }
    let mut fit = vec![false; val.len()];
    let mut select = vec![false; val.len()];
    for (j, &v) in nodes.iter().enumerate() {
        if j < held {
            select[v] = true;
        } else {
            fit[v] = true;
        }
    }
    Ok((fit, select))
}

struct Pls<'p> {
    partitioning: &'p Partitioning,
    r: usize,
    score_interval: usize,
}

/// Gradient descent on per-layer interpolation ratios against the full-graph
/// validation loss. Returns the soup of the epoch with the best validation
/// accuracy (ratios before that epoch's step).
pub fn learned_soup(
    members: &[ModelParams],
    graph: &CsrGraph,
    cfg: &LsConfig,
) -> Result<SoupReport, SoupError> {
    run(members, graph, cfg, None)
}

/// Learned souping where each epoch trains on the union of `r` random
/// partitions out of `k`. With `r == k` the run is identical to
/// [`learned_soup`].
pub fn pls_soup(
    members: &[ModelParams],
    graph: &CsrGraph,
    partitioning: &Partitioning,
    cfg: &PlsConfig,
) -> Result<SoupReport, SoupError> {
    if partitioning.num_nodes() != graph.num_nodes() {
        return Err(SoupError::InvalidConfig(
            "partitioning does not cover this graph".into(),
        ));
    }
    if cfg.k != partitioning.k() {
        return Err(SoupError::InvalidConfig(format!(
            "config k = {} but partitioning has {} parts",
            cfg.k,
            partitioning.k()
        )));
    }
    if cfg.r == 0 || cfg.r > cfg.k {
        return Err(SoupError::InvalidConfig(format!(
            "need 1 <= r <= k, got r = {}, k = {}",
            cfg.r, cfg.k
        )));
    }
    run(
        members,
        graph,
        &cfg.ls,
        Some(Pls {
            partitioning,
            r: cfg.r,
            score_interval: cfg.score_interval,
        }),
    )
}

fn run(
    members: &[ModelParams],
    graph: &CsrGraph,
    cfg: &LsConfig,
    pls: Option<Pls<'_>>,
) -> Result<SoupReport, SoupError> {
    check_members(members)?;
    if members.len() < 2 {
        return Err(SoupError::InvalidConfig(
            "learned souping needs at least 2 ingredients".into(),
        ));
    }
    cfg.validate()?;
    let start = Instant::now();
    let mut meter = PeakMeter::start();
    let spec = *members[0].spec();
    let (fit_full, select_full) = val_masks(graph, cfg.val_holdout, cfg.alpha_seed)?;
    let full_input = match pls {
        None => Some(ModelInput::new(graph, spec.arch)),
        Some(_) => None,
    };

    let mut alphas =
        AlphaMatrix::glorot(members.len(), spec.num_layers, cfg.alpha_seed, cfg.simplex);
    let mut best: Option<(f64, AlphaMatrix)> = None;
    let mut counters = PassCounters::default();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr as f64, epoch, cfg.t0);
        let scores_from_forward = pls.as_ref().is_none_or(|p| p.r == p.partitioning.k());
        // the subgraph and its operator live only for this block, so they are
        // gone before the optional full-graph scoring pass below
        let (nodes, loss_value, own_acc, grad) = {
            let sub = match &pls {
                Some(p) => Some(draw_subgraph(graph, p, &fit_full, cfg.alpha_seed, epoch)?),
                None => None,
            };
            let sub_input;
            let (input, fit, select): (&ModelInput<'_>, Vec<bool>, Vec<bool>) = match &sub {
                Some(s) => {
                    sub_input = ModelInput::new(s, spec.arch);
                    let restrict = |m: &[bool]| s.node_map().iter().map(|&v| m[v]).collect();
                    (&sub_input, restrict(&fit_full), restrict(&select_full))
                }
                None => (
                    full_input.as_ref().expect("built for learned souping"),
                    fit_full.clone(),
                    select_full.clone(),
                ),
            };
            let nodes = input.num_nodes();
            let mut tape = GradTape::new();
            let raw = tape.leaf(alphas.raw_matrix().clone(), true);
            let weights = soup_on_tape(&mut tape, members, raw, cfg.simplex)?;
            let logits = forward_tape(&mut tape, &spec, &weights, input, Mode::Eval)?;
            let loss = tape.cross_entropy_masked(logits, input.labels(), &fit)?;
            let loss_value = tape.value(loss).data()[0] as f64;
            if !loss_value.is_finite() {
                return Err(SoupError::Diverged { epoch });
            }
            let own_acc = if scores_from_forward {
                Some(accuracy(tape.value(logits), input.labels(), &select)?)
            } else {
                None
            };
            let mut grads = tape
                .backward(loss)
                .map_err(|_| SoupError::Diverged { epoch })?;
            (
                nodes,
                loss_value,
                own_acc,
                grads.take(raw).expect("alpha leaf has a gradient"),
            )
        };
        counters.forward(nodes);
        counters.backward_passes += 1;

        let acc = match (own_acc, &pls) {
            (Some(a), _) => Some(a),
            (None, Some(p))
                if p.score_interval > 0
                    && (epoch % p.score_interval == 0 || epoch + 1 == cfg.epochs) =>
            {
                counters.snapshot_scoring_passes += 1;
                Some(score_full(members, &alphas, graph, &select_full)?)
            }
            _ => None,
        };
        if let Some(a) = acc {
            if best.as_ref().is_none_or(|(b, _)| a > *b) {
                best = Some((a, alphas.clone()));
            }
        }

        let wd = cfg.weight_decay as f64;
        for (w, &g) in alphas
            .raw_matrix_mut()
            .data_mut()
            .iter_mut()
            .zip(grad.data())
        {
            *w = (*w as f64 - lr * (g as f64 + wd * *w as f64)) as f32;
        }
        if !alphas.raw_matrix().is_finite() {
            return Err(SoupError::Diverged { epoch });
        }
        trace.push(TraceEntry {
            val_acc: acc,
            loss: Some(loss_value),
            lr: Some(lr),
            nodes: Some(nodes),
            ..TraceEntry::new(epoch, best.as_ref().map_or(f64::NAN, |(b, _)| *b))
        });
        meter.lap();
    }

    let chosen = best.map_or(alphas, |(_, a)| a);
    let result = build_soup(members, &chosen)?;
    drop(full_input);
    counters.peak_tracked_bytes = meter.finish();
    let wall_seconds = start.elapsed().as_secs_f64();
    let (val_acc, test_acc) = final_metrics(&result, &ModelInput::new(graph, spec.arch))?;
    Ok(SoupReport {
        method: if pls.is_some() {
            Method::Pls
        } else {
            Method::Ls
        },
        result,
        val_acc,
        test_acc,
        wall_seconds,
        counters,
        kept: Vec::new(),
        alphas: Some(chosen),
        trace,
    })
}

fn draw_subgraph<'g>(
    graph: &'g CsrGraph,
    pls: &Pls<'_>,
    fit_full: &[bool],
    seed: u64,
    epoch: usize,
) -> Result<crate::graph::SubgraphView<'g>, SoupError> {
    for attempt in 0..2u64 {
        let key = epoch as u64 | (attempt << 63);
        let parts = choose_partitions(pls.partitioning, pls.r, seed, key)?;
        let sub = assemble_subgraph(graph, pls.partitioning, &parts)?;
        if sub.node_map().iter().any(|&v| fit_full[v]) {
            return Ok(sub);
        }
    }
    Err(SoupError::NoValidation { epoch })
}

/// Validation accuracy of the soup for `alphas` on the full graph. The
/// graph operator is built here and dropped on return.
fn score_full(
    members: &[ModelParams],
    alphas: &AlphaMatrix,
    graph: &CsrGraph,
    select: &[bool],
) -> Result<f64, SoupError> {
    let soup = build_soup(members, alphas)?;
    let input = ModelInput::new(graph, soup.spec().arch);
    let logits = predict(&soup, &input)?;
    Ok(accuracy(&logits, input.labels(), select)?)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::gnn::Arch;
    use crate::graph::partition;

    #[test]
    fn cosine_schedule_restarts() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 5, 10) - 0.5).abs() < 1e-12);
        assert_eq!(cosine_lr(1.0, 10, 10), 1.0);
        assert!(cosine_lr(2.0, 9, 10) < 0.05);
    }

    #[test]
    fn one_epoch_counts_one_pass_each_way() {
        let ms = members(Arch::Gcn, 3, 1);
        let cfg = LsConfig {
            epochs: 1,
            ..Default::default()
        };
        let r = learned_soup(&ms, &graph20(0), &cfg).unwrap();
        assert_eq!(
            (r.counters.forward_passes, r.counters.backward_passes),
            (1, 1)
        );
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn identical_members_give_the_model_back() {
        let m = members(Arch::Sage, 1, 2).remove(0);
        let r = learned_soup(
            &vec![m.clone(); 3],
            &graph20(1),
            &LsConfig {
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.result.max_abs_diff(&m) < 1e-6);
    }

    #[test]
    fn ratios_stay_on_the_simplex() {
        let ms = members(Arch::Gcn, 4, 3);
        let cfg = LsConfig {
            epochs: 20,
            lr: 5.0,
            ..Default::default()
        };
        let r = learned_soup(&ms, &graph20(2), &cfg).unwrap();
        let ratios = r.alphas.unwrap().ratios();
        for l in 0..2 {
            assert!((ratios.row(l).iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-5);
            assert!(ratios.row(l).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn config_errors() {
        let ms = members(Arch::Gcn, 2, 0);
        let g = graph20(0);
        assert!(learned_soup(&ms[..1], &g, &LsConfig::default()).is_err());
        assert!(learned_soup(
            &ms,
            &g,
            &LsConfig {
                epochs: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(learned_soup(
            &ms,
            &g,
            &LsConfig {
                t0: 0,
                ..Default::default()
            }
        )
        .is_err());
        let p = partition(&g, 2, 0).unwrap();
        let bad_r = PlsConfig {
            k: 2,
            r: 3,
            ..Default::default()
        };
        assert!(pls_soup(&ms, &g, &p, &bad_r).is_err());
        let bad_k = PlsConfig {
            k: 4,
            r: 1,
            ..Default::default()
        };
        assert!(pls_soup(&ms, &g, &p, &bad_k).is_err());
    }

    #[test]
    fn holdout_splits_validation() {
        let g = graph20(3);
        let (fit, select) = val_masks(&g, 0.5, 1).unwrap();
        let val = g.mask(Split::Val);
        for v in 0..g.num_nodes() {
            assert!(!(fit[v] && select[v]));
            assert_eq!(fit[v] || select[v], val[v]);
        }
        assert!(select.iter().any(|&b| b) && fit.iter().any(|&b| b));
    }
}

//! Training a population of ingredients from one shared initialization.
//!
//! Ingredients never communicate: [`train_one`] sees only the read-only graph,
//! the initial parameters, a config and its own seed. [`train_population`]
//! hands ingredient indices to worker threads through a shared counter and
//! collects results by index, so the outcome is independent of the worker
//! count.

mod store;

pub use store::{
    load_ingredients, save_ingredients, IngredientEntry, Manifest, MANIFEST_FILE, SHARED_INIT_FILE,
};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{
    evaluate, forward_tape, init_params, GnnError, Mode, ModelInput, ModelParams, ModelSpec,
};
use crate::graph::{GraphData, Split};
use crate::rng;
use crate::tensor::{DenseMat, GradTape, TensorError, Var};

#[derive(Debug, Error)]
pub enum IngredientError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("ingredient {index}: {source}")]
    Ingredient {
        index: usize,
        #[source]
        source: Box<IngredientError>,
    },
    #[error("malformed ingredient directory: {0}")]
    Store(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!(
                "unknown optimizer {other:?} (expected sgd or adam)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub optimizer: Optimizer,
    /// Member `i` trains with seed `seed_base + i`; the shared initialization
    /// is also derived from it.
    pub seed_base: u64,
    /// Adds seeded N(0, 1e-4²) noise to every gradient when the model has no
    /// dropout, so members still diverge.
    pub diversity_jitter: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            weight_decay: 5e-4,
            optimizer: Optimizer::Adam,
            seed_base: 0,
            diversity_jitter: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), IngredientError> {
        if self.epochs == 0 {
            return Err(IngredientError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(IngredientError::InvalidConfig(format!(
                "learning rate {} must be finite and >= 0",
                self.lr
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(IngredientError::InvalidConfig(format!(
                "weight decay {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

const JITTER_STD: f32 = 1e-4;
const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
const ADAM_EPS: f64 = 1e-8;

/// Seed of the shared initialization for a population.
pub fn shared_init_seed(seed_base: u64) -> u64 {
    rng::mix(&[seed_base, 0x1417])
}

#[derive(Debug, Clone)]
pub struct IngredientSet {
    pub shared_init: ModelParams,
    pub members: Vec<ModelParams>,
    pub val_accs: Vec<f64>,
    pub train_times: Vec<f64>,
}

struct OptState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl OptState {
    fn new(params: &ModelParams) -> Self {
        let zeros = || params.groups().map(|g| vec![0.0; g.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

fn apply_update(
    params: &mut ModelParams,
    grads: &[DenseMat],
    cfg: &TrainConfig,
    state: &mut OptState,
) {
    state.step += 1;
    let lr = cfg.lr as f64;
    let wd = cfg.weight_decay as f64;
    let (b1, b2) = ADAM_BETAS;
    let c1 = 1.0 - b1.powi(state.step);
    let c2 = 1.0 - b2.powi(state.step);
    let groups = params.layers_mut().iter_mut().flatten();
    for (gi, (p, g)) in groups.zip(grads).enumerate() {
        let (m, v) = (&mut state.m[gi], &mut state.v[gi]);
        for (j, (w, &dw)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let grad = dw as f64 + wd * *w as f64;
            let step = match cfg.optimizer {
                Optimizer::Sgd => lr * grad,
                Optimizer::Adam => {
                    m[j] = b1 * m[j] + (1.0 - b1) * grad;
                    v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
                    lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS)
                }
            };
            *w = (*w as f64 - step) as f32;
        }
    }
}

fn diverged(epoch: usize, e: impl std::fmt::Display) -> IngredientError {
    IngredientError::Diverged {
        epoch,
        detail: e.to_string(),
    }
}

/// Full-batch training of one ingredient on the train mask. Returns the
/// final-epoch parameters and their validation accuracy.
pub fn train_one(
    graph: &impl GraphData,
    init: &ModelParams,
    config: &TrainConfig,
    ingredient_seed: u64,
) -> Result<(ModelParams, f64), IngredientError> {
    config.validate()?;
    let spec = *init.spec();
    let input = ModelInput::new(graph, spec.arch);
    let mut params = init.clone();
    let mut state = OptState::new(&params);
    let jitter = config.diversity_jitter && spec.dropout == 0.0;
    for epoch in 0..config.epochs {
        let grads = {
            let mut tape = GradTape::new();
            let vars: Vec<Vec<Var>> = params
                .layers()
                .iter()
                .map(|gs| gs.iter().map(|m| tape.param(m)).collect())
                .collect();
            let mode = Mode::Train {
                seed: rng::mix(&[ingredient_seed, epoch as u64]),
            };
            let logits =
                forward_tape(&mut tape, &spec, &vars, &input, mode).map_err(|e| match e {
                    GnnError::Tensor(t) => diverged(epoch, t),
                    other => other.into(),
                })?;
            let loss = tape
                .cross_entropy_masked(logits, input.labels(), input.mask(Split::Train))
                .map_err(|e| match e {
                    TensorError::NonFinite { .. } => diverged(epoch, e),
                    other => GnnError::from(other).into(),
                })?;
            let mut grads = tape.backward(loss).map_err(|e| diverged(epoch, e))?;
            let mut out: Vec<DenseMat> = vars
                .iter()
                .flatten()
                .map(|&v| grads.take(v).expect("param has gradient"))
                .collect();
            if jitter {
                let normal = Normal::new(0.0f32, JITTER_STD).expect("positive std");
                let mut r = rng::stream(&[ingredient_seed, epoch as u64, 0x717]);
                for g in &mut out {
                    for x in g.data_mut() {
                        *x += normal.sample(&mut r);
                    }
                }
            }
            out
        };
        apply_update(&mut params, &grads, config, &mut state);
        if params.groups().any(|g| !g.is_finite()) {
            return Err(diverged(epoch, "parameters became non-finite"));
        }
    }
    let acc = evaluate(&params, &input, Split::Val)?;
    Ok((params, acc))
}

/// Trains `n` ingredients from `init_params(spec, shared_init_seed(seed_base))`
/// over `workers` threads.
pub fn train_population<G: GraphData + Sync>(
    graph: &G,
    spec: &ModelSpec,
    config: &TrainConfig,
    n: usize,
    workers: usize,
) -> Result<IngredientSet, IngredientError> {
    if n == 0 || workers == 0 {
        return Err(IngredientError::InvalidConfig(
            "need n >= 1 and workers >= 1".into(),
        ));
    }
    config.validate()?;
    let shared_init = init_params(spec, shared_init_seed(config.seed_base))?;
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<(ModelParams, f64, f64), IngredientError>>> =
        (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers.min(n))
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        let start = Instant::now();
                        let result = train_one(
                            graph,
                            &shared_init,
                            config,
                            config.seed_base.wrapping_add(i as u64),
                        )
                        .map(|(p, acc)| (p, acc, start.elapsed().as_secs_f64()));
                        done.push((i, result));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("training worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let mut set = IngredientSet {
        shared_init,
        members: Vec::with_capacity(n),
        val_accs: Vec::with_capacity(n),
        train_times: Vec::with_capacity(n),
    };
    for (index, slot) in slots.into_iter().enumerate() {
        let (p, acc, secs) =
            slot.expect("every index is claimed")
                .map_err(|e| IngredientError::Ingredient {
                    index,
                    source: Box::new(e),
                })?;
        set.members.push(p);
        set.val_accs.push(acc);
        set.train_times.push(secs);
    }
    Ok(set)
}

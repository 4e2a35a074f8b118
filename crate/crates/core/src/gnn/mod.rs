//! GCN and GraphSAGE-mean models whose parameters can be souped.

mod checkpoint;
mod forward;
mod input;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use forward::{accuracy, evaluate, forward_tape, loss_and_accuracy, predict, Mode};
pub use input::ModelInput;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tensor::{DenseMat, TensorError};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed checkpoint ({section}): {detail}")]
    Checkpoint {
        section: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
}

impl Arch {
    /// Parameter groups per layer: GCN `[weight, bias]`, SAGE
    /// `[self_weight, neighbor_weight, bias]`.
    pub fn groups_per_layer(self) -> usize {
        match self {
            Arch::Gcn => 2,
            Arch::Sage => 3,
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" => Ok(Arch::Sage),
            other => Err(format!(
                "unknown architecture {other:?} (expected gcn or sage)"
            )),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub num_layers: usize,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout: f32,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.num_layers < 2 {
            return Err(GnnError::InvalidSpec(format!(
                "need at least 2 layers, got {}",
                self.num_layers
            )));
        }
        if self.num_layers > u8::MAX as usize {
            return Err(GnnError::InvalidSpec(format!(
                "{} layers is too many",
                self.num_layers
            )));
        }
        if self.in_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(GnnError::InvalidSpec("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GnnError::InvalidSpec(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// `(input, output)` width of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let input = if l == 0 { self.in_dim } else { self.hidden_dim };
        let output = if l + 1 == self.num_layers {
            self.out_dim
        } else {
            self.hidden_dim
        };
        (input, output)
    }

    /// Expected shapes of the parameter groups of layer `l`.
    pub fn group_shapes(&self, l: usize) -> Vec<(usize, usize)> {
        let (i, o) = self.layer_dims(l);
        match self.arch {
            Arch::Gcn => vec![(i, o), (1, o)],
            Arch::Sage => vec![(i, o), (i, o), (1, o)],
        }
    }
}

/// Parameters of one model: `layers[l][g]` is group `g` of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layers: Vec<Vec<DenseMat>>,
}

impl ModelParams {
    pub fn new(spec: ModelSpec, layers: Vec<Vec<DenseMat>>) -> Result<Self, GnnError> {
        spec.validate()?;
        if layers.len() != spec.num_layers {
            return Err(GnnError::DimensionMismatch(format!(
                "{} layer groups for a {}-layer spec",
                layers.len(),
                spec.num_layers
            )));
        }
        for (l, groups) in layers.iter().enumerate() {
            let shapes: Vec<_> = groups.iter().map(DenseMat::shape).collect();
            if shapes != spec.group_shapes(l) {
                return Err(GnnError::DimensionMismatch(format!(
                    "layer {l} has shapes {shapes:?}, spec needs {:?}",
                    spec.group_shapes(l)
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Vec<DenseMat>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<DenseMat>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<DenseMat>> {
        self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.groups().map(DenseMat::len).sum()
    }

    /// All parameter groups, layer-major.
    pub fn groups(&self) -> impl Iterator<Item = &DenseMat> {
        self.layers.iter().flatten()
    }

    /// Equal specs mean the groups align index by index.
    pub fn is_compatible(&self, other: &ModelParams) -> bool {
        self.spec == other.spec
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f32 {
        if !self.is_compatible(other) {
            return f32::INFINITY;
        }
        self.groups()
            .zip(other.groups())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f32::max)
    }

    /// Euclidean distance between flattened parameter vectors.
    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.groups()
            .zip(other.groups())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Applies `f` to every scalar parameter.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self, GnnError> {
        let layers = self
            .layers
            .iter()
            .map(|groups| {
                groups
                    .iter()
                    .map(|g| {
                        DenseMat::from_vec(
                            g.rows(),
                            g.cols(),
                            g.data().iter().map(|&v| f(v)).collect(),
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec: self.spec,
            layers,
        })
    }
}

/// Glorot-normal weights (`std = sqrt(2 / (fan_in + fan_out))`), zero biases.
/// Deterministic in `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams, GnnError> {
    spec.validate()?;
    let layers = (0..spec.num_layers)
        .map(|l| {
            spec.group_shapes(l)
                .into_iter()
                .enumerate()
                .map(|(g, (rows, cols))| {
                    if rows == 1 {
                        return Ok(DenseMat::zeros(rows, cols));
                    }
                    let std = (2.0 / (rows + cols) as f64).sqrt() as f32;
                    let normal = Normal::new(0.0f32, std).expect("positive std");
                    let mut r = rng::stream(&[seed, l as u64, g as u64]);
                    DenseMat::from_vec(
                        rows,
                        cols,
                        (0..rows * cols).map(|_| normal.sample(&mut r)).collect(),
                    )
                })
                .collect::<Result<Vec<_>, TensorError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    ModelParams::new(*spec, layers)
}

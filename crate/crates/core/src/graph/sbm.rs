use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CsrGraph, GraphError};
use crate::rng;
use crate::tensor::{CsrMat, DenseMat};

/// Stochastic block model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmParams {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    pub noise: f32,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            nodes: 1000,
            classes: 7,
            p_in: 0.02,
            p_out: 0.002,
            feat_dim: 64,
            noise: 0.3,
            split: [0.5, 0.25, 0.25],
            seed: 1,
        }
    }
}

/// Generates an SBM graph. Nodes are split into `classes` contiguous blocks of
/// near-equal size; label = block. A pair in the same block is joined with
/// probability `p_in`, otherwise `p_out`. Node features are the one-hot class
/// indicator plus Gaussian noise, and the split assignment is a seeded random
/// permutation.
pub fn generate_sbm(params: &SbmParams) -> Result<CsrGraph, GraphError> {
    let SbmParams {
        nodes: n,
        classes,
        p_in,
        p_out,
        feat_dim,
        noise,
        split,
        seed,
    } = params.clone();
    if classes == 0 || n < classes {
        return Err(GraphError::InvalidParameter(format!(
            "{n} nodes cannot fill {classes} non-empty classes"
        )));
    }
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return Err(GraphError::InvalidParameter(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if feat_dim < classes {
        return Err(GraphError::InvalidParameter(format!(
            "feat_dim {feat_dim} must be at least the class count {classes}"
        )));
    }
    if split.iter().any(|f| *f < 0.0) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GraphError::InvalidParameter(format!(
            "split fractions {split:?} must sum to 1"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(GraphError::InvalidParameter(format!(
            "noise {noise} must be finite and >= 0"
        )));
    }

    let labels: Vec<u32> = (0..n).map(|i| (i * classes / n) as u32).collect();

    let mut edge_rng = rng::stream(&[seed, 1]);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if p > 0.0 && edge_rng.random_bool(p) {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = CsrMat::from_triplets(n, n, triplets)?;

    let mut feat_rng = rng::stream(&[seed, 2]);
    let mut features = DenseMat::zeros(n, feat_dim);
    for (i, &label) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            let z: f32 = StandardNormal.sample(&mut feat_rng);
            *v = noise * z;
        }
        row[label as usize] += 1.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(&[seed, 3]));
    let n_train = (split[0] * n as f64).round() as usize;
    let n_val = ((split[1] * n as f64).round() as usize).min(n - n_train);
    let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
    for (pos, &v) in order.iter().enumerate() {
        let s = if pos < n_train {
            0
        } else if pos < n_train + n_val {
            1
        } else {
            2
        };
        masks[s][v] = true;
    }

    CsrGraph::new(adjacency, features, labels, classes, masks)
}

use std::borrow::Cow;

use super::{Arch, GnnError, ModelInput, ModelParams, ModelSpec};
use crate::graph::Split;
use crate::rng;
use crate::tensor::{kernels, DenseMat, GradTape, TensorError, Var};

/// Forward mode. Training applies dropout with masks keyed to `seed` and the
/// layer index; evaluation disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

fn check_input(spec: &ModelSpec, input: &ModelInput<'_>) -> Result<(), GnnError> {
    if input.arch() != spec.arch {
        return Err(GnnError::DimensionMismatch(format!(
            "input prepared for {}, model is {}",
            input.arch(),
            spec.arch
        )));
    }
    if input.features().cols() != spec.in_dim {
        return Err(GnnError::DimensionMismatch(format!(
            "graph has {} features, model expects {}",
            input.features().cols(),
            spec.in_dim
        )));
    }
    if input.num_classes() != spec.out_dim {
        return Err(GnnError::DimensionMismatch(format!(
            "graph has {} classes, model outputs {}",
            input.num_classes(),
            spec.out_dim
        )));
    }
    Ok(())
}

/// Records a forward pass on `tape`. `weights[l]` holds the tape variables of
/// layer `l`'s parameter groups (leaves for training, soup combinations for
/// souping). Returns the logits.
pub fn forward_tape<'a>(
    tape: &mut GradTape<'a>,
    spec: &ModelSpec,
    weights: &[Vec<Var>],
    input: &'a ModelInput<'_>,
    mode: Mode,
) -> Result<Var, GnnError> {
    check_input(spec, input)?;
    if weights.len() != spec.num_layers {
        return Err(GnnError::DimensionMismatch(format!(
            "{} weight layers for {} model layers",
            weights.len(),
            spec.num_layers
        )));
    }
    let op = input.operator();
    let mut h = tape.constant(input.features());
    for (l, groups) in weights.iter().enumerate() {
        let out = match spec.arch {
            Arch::Gcn => {
                let xw = tape.matmul(h, groups[0])?;
                let agg = tape.spmm(op, xw)?;
                tape.add_bias(agg, groups[1])?
            }
            Arch::Sage => {
                let own = tape.matmul(h, groups[0])?;
                let mean = tape.spmm(op, h)?;
                let nb = tape.matmul(mean, groups[1])?;
                let sum = tape.add(own, nb)?;
                tape.add_bias(sum, groups[2])?
            }
        };
        h = out;
        if l + 1 < spec.num_layers {
            h = tape.relu(h)?;
            if let Mode::Train { seed } = mode {
                h = tape.dropout(h, spec.dropout, rng::mix(&[seed, l as u64]))?;
            }
        }
    }
    Ok(h)
}

/// Tape-free evaluation-mode forward. Uses the same kernels in the same order
/// as [`forward_tape`], so logits agree bit for bit, but frees each
/// intermediate as soon as it is consumed.
pub fn predict(params: &ModelParams, input: &ModelInput<'_>) -> Result<DenseMat, GnnError> {
    let spec = params.spec();
    check_input(spec, input)?;
    let op = input.operator();
    let mut h: Cow<'_, DenseMat> = Cow::Borrowed(input.features());
    for (l, groups) in params.layers().iter().enumerate() {
        let mut out = match spec.arch {
            Arch::Gcn => {
                let xw = kernels::matmul(&h, &groups[0])?;
                drop(h);
                let mut agg = kernels::spmm(op, &xw)?;
                drop(xw);
                kernels::add_bias_in_place(&mut agg, &groups[1])?;
                agg
            }
            Arch::Sage => {
                let mut own = kernels::matmul(&h, &groups[0])?;
                let mean = kernels::spmm(op, &h)?;
                drop(h);
                let nb = kernels::matmul(&mean, &groups[1])?;
                drop(mean);
                kernels::add_in_place(&mut own, &nb)?;
                drop(nb);
                kernels::add_bias_in_place(&mut own, &groups[2])?;
                own
            }
        };
        if l + 1 < spec.num_layers {
            kernels::relu_in_place(&mut out);
        }
        h = Cow::Owned(out);
    }
    Ok(h.into_owned())
}

/// Fraction of masked rows whose arg-max logit (lowest index on ties) equals
/// the label.
pub fn accuracy(logits: &DenseMat, labels: &[u32], mask: &[bool]) -> Result<f64, GnnError> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(GnnError::DimensionMismatch(
            "labels/mask do not match logits".into(),
        ));
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        total += 1;
        let row = logits.row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == labels[r] as usize {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(TensorError::EmptyMask.into());
    }
    Ok(hits as f64 / total as f64)
}

/// Mean masked cross-entropy (natural log) and accuracy.
pub fn loss_and_accuracy(
    logits: &DenseMat,
    labels: &[u32],
    mask: &[bool],
) -> Result<(f64, f64), GnnError> {
    let (loss, _, _) = kernels::masked_cross_entropy(logits, labels, mask)?;
    Ok((loss, accuracy(logits, labels, mask)?))
}

/// Evaluation-mode accuracy of `params` on one split of `input`.
pub fn evaluate(
    params: &ModelParams,
    input: &ModelInput<'_>,
    split: Split,
) -> Result<f64, GnnError> {
    let logits = predict(params, input)?;
    accuracy(&logits, input.labels(), input.mask(split))
}

//! Forward and backward kernels shared by the tape and the tape-free
//! inference path. Every reduction runs sequentially in index order with an
//! `f64` accumulator, so results are reproducible bit-for-bit.

use super::alloc::TrackedVec;
use super::{CsrMat, DenseMat, TensorError};

fn check_inner(
    op: &'static str,
    left: (usize, usize),
    right: (usize, usize),
) -> Result<(), TensorError> {
    if left.1 != right.0 {
        return Err(TensorError::ShapeMismatch { op, left, right });
    }
    Ok(())
}

fn check_same(
    op: &'static str,
    left: (usize, usize),
    right: (usize, usize),
) -> Result<(), TensorError> {
    if left != right {
        return Err(TensorError::ShapeMismatch { op, left, right });
    }
    Ok(())
}

fn finish(op: &'static str, m: DenseMat) -> Result<DenseMat, TensorError> {
    m.check_finite(op)?;
    Ok(m)
}

/// Sparse x dense product.
pub fn spmm(a: &CsrMat, b: &DenseMat) -> Result<DenseMat, TensorError> {
    check_inner("spmm", (a.rows(), a.cols()), b.shape())?;
    let n = b.cols();
    let mut out = DenseMat::zeros(a.rows(), n);
    let mut acc = vec![0f64; n];
    for r in 0..a.rows() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (&c, &v) in a.row_cols(r).iter().zip(a.row_vals(r)) {
            let v = v as f64;
            for (slot, &x) in acc.iter_mut().zip(b.row(c)) {
                *slot += v * x as f64;
            }
        }
        for (o, &v) in out.row_mut(r).iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    finish("spmm", out)
}

/// Dense x dense product.
pub fn matmul(a: &DenseMat, b: &DenseMat) -> Result<DenseMat, TensorError> {
    check_inner("matmul", a.shape(), b.shape())?;
    let n = b.cols();
    let mut out = DenseMat::zeros(a.rows(), n);
    let mut acc = vec![0f64; n];
    for i in 0..a.rows() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let aik = aik as f64;
            for (slot, &bkj) in acc.iter_mut().zip(b.row(k)) {
                *slot += aik * bkj as f64;
            }
        }
        for (o, &v) in out.row_mut(i).iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    finish("matmul", out)
}

/// `acc + s * m`, evaluated in `f64` and rounded once.
pub fn scale_add(acc: &DenseMat, s: f32, m: &DenseMat) -> Result<DenseMat, TensorError> {
    check_same("scale_add", acc.shape(), m.shape())?;
    let s = s as f64;
    let data = acc
        .data()
        .iter()
        .zip(m.data())
        .map(|(&a, &x)| (a as f64 + s * x as f64) as f32)
        .collect();
    DenseMat::from_vec(acc.rows(), acc.cols(), data)
        .map_err(|_| TensorError::NonFinite { op: "scale_add" })
}

pub fn add_in_place(x: &mut DenseMat, y: &DenseMat) -> Result<(), TensorError> {
    check_same("add", x.shape(), y.shape())?;
    for (a, &b) in x.data_mut().iter_mut().zip(y.data()) {
        *a += b;
    }
    x.check_finite("add")
}

/// Adds the `1 x cols` row `bias` to every row of `x`.
pub fn add_bias_in_place(x: &mut DenseMat, bias: &DenseMat) -> Result<(), TensorError> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(TensorError::ShapeMismatch {
            op: "add_bias",
            left: x.shape(),
            right: bias.shape(),
        });
    }
    for r in 0..x.rows() {
        for (a, &b) in x.row_mut(r).iter_mut().zip(bias.data()) {
            *a += b;
        }
    }
    x.check_finite("add_bias")
}

pub fn relu_in_place(x: &mut DenseMat) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Row-wise softmax, computed in `f64` with max subtraction.
pub fn row_softmax(x: &DenseMat) -> Result<DenseMat, TensorError> {
    let mut out = DenseMat::zeros(x.rows(), x.cols());
    let mut buf = vec![0f64; x.cols()];
    for r in 0..x.rows() {
        softmax_row(x.row(r), &mut buf);
        for (o, &p) in out.row_mut(r).iter_mut().zip(&buf) {
            *o = p as f32;
        }
    }
    finish("row_softmax", out)
}

pub(crate) fn softmax_row(row: &[f32], out: &mut [f64]) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v as f64 - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Mean softmax cross-entropy over rows with `mask[r]` set.
///
/// Returns the loss and, for each masked row in order, the softmax
/// probabilities (needed by the backward pass).
pub fn masked_cross_entropy(
    logits: &DenseMat,
    labels: &[u32],
    mask: &[bool],
) -> Result<(f64, Vec<usize>, Vec<f64>), TensorError> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy_masked",
            left: logits.shape(),
            right: (labels.len(), mask.len()),
        });
    }
    let c = logits.cols();
    let rows: Vec<usize> = (0..logits.rows()).filter(|&r| mask[r]).collect();
    if rows.is_empty() {
        return Err(TensorError::EmptyMask);
    }
    let mut probs = vec![0f64; rows.len() * c];
    let mut total = 0.0;
    for (i, &r) in rows.iter().enumerate() {
        let label = labels[r] as usize;
        if label >= c {
            return Err(TensorError::LabelOutOfRange {
                label: labels[r],
                classes: c,
            });
        }
        let row = logits.row(r);
        let p = &mut probs[i * c..(i + 1) * c];
        softmax_row(row, p);
        // log-sum-exp form keeps the loss finite for saturated probabilities
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let lse = max
            + row
                .iter()
                .map(|&v| (v as f64 - max).exp())
                .sum::<f64>()
                .ln();
        total += lse - row[label] as f64;
    }
    let loss = total / rows.len() as f64;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite {
            op: "cross_entropy_masked",
        });
    }
    Ok((loss, rows, probs))
}

// ---- backward helpers (f64 upstream, f64 result) ----

/// `up · bᵀ` for `up: m x n`, `b: k x n`.
pub(crate) fn grad_matmul_lhs(up: &[f64], m: usize, b: &DenseMat) -> TrackedVec<f64> {
    let (k, n) = b.shape();
    let mut out = TrackedVec::filled(0f64, m * k);
    for i in 0..m {
        let up_row = &up[i * n..(i + 1) * n];
        for p in 0..k {
            let mut acc = 0.0;
            for (&u, &bv) in up_row.iter().zip(b.row(p)) {
                acc += u * bv as f64;
            }
            out[i * k + p] = acc;
        }
    }
    out
}

/// `aᵀ · up` for `a: m x k`, `up: m x n`.
pub(crate) fn grad_matmul_rhs(a: &DenseMat, up: &[f64], n: usize) -> TrackedVec<f64> {
    let (m, k) = a.shape();
    let mut out = TrackedVec::filled(0f64, k * n);
    for i in 0..m {
        let up_row = &up[i * n..(i + 1) * n];
        for (p, &aip) in a.row(i).iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let aip = aip as f64;
            let slot = &mut out[p * n..(p + 1) * n];
            for (o, &u) in slot.iter_mut().zip(up_row) {
                *o += aip * u;
            }
        }
    }
    out
}

/// `aᵀ · up` for sparse `a: m x k` and `up: m x n`.
pub(crate) fn grad_spmm(a: &CsrMat, up: &[f64], n: usize) -> TrackedVec<f64> {
    let mut out = TrackedVec::filled(0f64, a.cols() * n);
    for r in 0..a.rows() {
        let up_row = &up[r * n..(r + 1) * n];
        for (&c, &v) in a.row_cols(r).iter().zip(a.row_vals(r)) {
            let v = v as f64;
            let slot = &mut out[c * n..(c + 1) * n];
            for (o, &u) in slot.iter_mut().zip(up_row) {
                *o += v * u;
            }
        }
    }
    out
}

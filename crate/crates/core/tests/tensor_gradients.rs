//! Every tape primitive's backward against central finite differences of an
//! independent f64 implementation (h = 1e-3, relative tolerance 1e-3).

mod common;

use common::{rel_err, M};
use rand::Rng;
use soupkit::rng;
use soupkit::tensor::{CsrMat, DenseMat, GradTape, Var};

const H: f64 = 1e-3;
const TOL: f64 = 1e-3;
const SEEDS: u64 = 20;

fn random(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMat {
    DenseMat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect(),
    )
    .unwrap()
}

/// Random matrix whose entries stay clear of zero (for the ReLU kink).
fn away_from_zero(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMat {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f32 = r.random_range(0.05..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    DenseMat::from_vec(rows, cols, data).unwrap()
}

fn dims(r: &mut impl Rng) -> (usize, usize) {
    (r.random_range(2..6), r.random_range(2..6))
}

/// Weighted read-out `Σ w ⊙ x` so every output entry gets a distinct
/// upstream gradient.
fn readout(tape: &mut GradTape<'_>, x: Var, w: &DenseMat) -> Var {
    let wv = tape.leaf(w.clone(), false);
    let prod = tape.mul(x, wv).unwrap();
    tape.sum(prod).unwrap()
}

fn dot(a: &M, w: &DenseMat) -> f64 {
    a.d.iter().zip(w.data()).map(|(x, y)| x * *y as f64).sum()
}

/// Compares the tape's gradient of every input with central differences of
/// `oracle`, and the tape's forward value with `oracle` at the base point.
fn check<'a>(
    what: &str,
    inputs: &[DenseMat],
    build: impl Fn(&mut GradTape<'a>, &[Var]) -> Var,
    oracle: impl Fn(&[M]) -> f64,
) {
    let mut tape = GradTape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    let value = tape.value(loss).data()[0] as f64;
    let grads = tape.backward(loss).unwrap();

    let base: Vec<M> = inputs.iter().map(M::from_dense).collect();
    let f0 = oracle(&base);
    assert!(
        rel_err(value, f0, 1.0) < 1e-5,
        "{what}: forward {value} vs oracle {f0}"
    );

    for (k, v) in vars.iter().enumerate() {
        let g = grads
            .get(*v)
            .unwrap_or_else(|| panic!("{what}: no gradient for input {k}"));
        for e in 0..base[k].d.len() {
            let mut plus = base.clone();
            plus[k].d[e] += H;
            let mut minus = base.clone();
            minus[k].d[e] -= H;
            let fd = (oracle(&plus) - oracle(&minus)) / (2.0 * H);
            let an = g.data()[e] as f64;
            assert!(
                rel_err(an, fd, 1e-3) < TOL,
                "{what}: input {k} entry {e}: tape {an} vs fd {fd}"
            );
        }
    }
}

fn sparse(r: &mut impl Rng, rows: usize, cols: usize) -> (CsrMat, M) {
    let mut trip = Vec::new();
    let mut dense = M::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if r.random_bool(0.4) {
                let v: f32 = r.random_range(-1.0..1.0);
                trip.push((i, j, v));
                dense.d[i * cols + j] = v as f64;
            }
        }
    }
    (CsrMat::from_triplets(rows, cols, trip).unwrap(), dense)
}

#[test]
fn spmm() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(s);
        let (n, c) = dims(&mut r);
        let (adj, dense) = sparse(&mut r, n, n);
        let x = random(&mut r, n, c);
        let w = random(&mut r, n, c);
        check(
            "spmm",
            &[x],
            |t, v| {
                let y = t.spmm(&adj, v[0]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&dense.mm(&m[0]), &w),
        );
    }
}

#[test]
fn matmul() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(100 + s);
        let (n, k) = dims(&mut r);
        let c = r.random_range(2..6);
        let (a, b, w) = (
            random(&mut r, n, k),
            random(&mut r, k, c),
            random(&mut r, n, c),
        );
        check(
            "matmul",
            &[a, b],
            |t, v| {
                let y = t.matmul(v[0], v[1]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&m[0].mm(&m[1]), &w),
        );
    }
}

#[test]
fn add_mul_and_bias() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(200 + s);
        let (n, c) = dims(&mut r);
        let (a, b, bias, w) = (
            random(&mut r, n, c),
            random(&mut r, n, c),
            random(&mut r, 1, c),
            random(&mut r, n, c),
        );
        check(
            "add",
            &[a.clone(), b.clone()],
            |t, v| {
                let y = t.add(v[0], v[1]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&m[0].add(&m[1]), &w),
        );
        check(
            "mul",
            &[a.clone(), b],
            |t, v| {
                let y = t.mul(v[0], v[1]).unwrap();
                readout(t, y, &w)
            },
            |m| {
                m[0].d
                    .iter()
                    .zip(&m[1].d)
                    .zip(w.data())
                    .map(|((x, y), z)| x * y * *z as f64)
                    .sum()
            },
        );
        check(
            "add_bias",
            &[a, bias],
            |t, v| {
                let y = t.add_bias(v[0], v[1]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&m[0].add_row(&m[1]), &w),
        );
    }
}

#[test]
fn scale_add_and_pick() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(300 + s);
        let (n, c) = dims(&mut r);
        let (acc, sc, m, w) = (
            random(&mut r, n, c),
            random(&mut r, 1, 1),
            random(&mut r, n, c),
            random(&mut r, n, c),
        );
        check(
            "scale_add",
            &[acc, sc, m],
            |t, v| {
                let y = t.scale_add(v[0], v[1], v[2]).unwrap();
                readout(t, y, &w)
            },
            |x| {
                let s = x[1].d[0];
                x[0].d
                    .iter()
                    .zip(&x[2].d)
                    .zip(w.data())
                    .map(|((a, b), z)| (a + s * b) * *z as f64)
                    .sum()
            },
        );
        let (pr, pc) = (r.random_range(0..n), r.random_range(0..c));
        let x = random(&mut r, n, c);
        let scale = random(&mut r, 1, 1);
        check(
            "pick",
            &[x],
            |t, v| {
                let y = t.pick(v[0], pr, pc).unwrap();
                readout(t, y, &scale)
            },
            |m| m[0].at(pr, pc) * scale.data()[0] as f64,
        );
    }
}

#[test]
fn relu_away_from_the_kink() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(400 + s);
        let (n, c) = dims(&mut r);
        let (x, w) = (away_from_zero(&mut r, n, c), random(&mut r, n, c));
        check(
            "relu",
            &[x],
            |t, v| {
                let y = t.relu(v[0]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&m[0].relu(), &w),
        );
    }
}

#[test]
fn dropout_with_its_recorded_mask() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(500 + s);
        let (n, c) = dims(&mut r);
        let (x, w) = (away_from_zero(&mut r, n, c), random(&mut r, n, c));
        let p = 0.4f32;
        // recover the mask from one forward; x has no zeros, so a zero
        // output means a dropped entry
        let mask: Vec<f64> = {
            let mut t = GradTape::new();
            let xv = t.leaf(x.clone(), false);
            let y = t.dropout(xv, p, s).unwrap();
            let keep = 1.0 / (1.0 - p as f64);
            t.value(y)
                .data()
                .iter()
                .map(|o| if *o == 0.0 { 0.0 } else { keep })
                .collect()
        };
        assert!(mask.iter().any(|m| *m == 0.0) || mask.len() < 8);
        check(
            "dropout",
            &[x],
            |t, v| {
                let y = t.dropout(v[0], p, s).unwrap();
                readout(t, y, &w)
            },
            |m| {
                m[0].d
                    .iter()
                    .zip(&mask)
                    .zip(w.data())
                    .map(|((x, k), z)| x * k * *z as f64)
                    .sum()
            },
        );
    }
}

fn softmax_rows(m: &M) -> M {
    let mut out = m.clone();
    for i in 0..m.rows {
        let row = &mut out.d[i * m.cols..(i + 1) * m.cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        row.iter_mut().for_each(|v| *v = (*v - max).exp() / z);
    }
    out
}

#[test]
fn row_softmax() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(600 + s);
        let (n, c) = dims(&mut r);
        let (x, w) = (random(&mut r, n, c), random(&mut r, n, c));
        check(
            "row_softmax",
            &[x],
            |t, v| {
                let y = t.row_softmax(v[0]).unwrap();
                readout(t, y, &w)
            },
            |m| dot(&softmax_rows(&m[0]), &w),
        );
    }
}

#[test]
fn masked_cross_entropy_and_sum() {
    for s in 0..SEEDS {
        let mut r = rng::seeded(700 + s);
        let (n, c) = dims(&mut r);
        let x = random(&mut r, n, c);
        let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..c as u32)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        mask[0] = true;
        check(
            "cross_entropy_masked",
            &[x.clone()],
            |t, v| t.cross_entropy_masked(v[0], &labels, &mask).unwrap(),
            |m| common::ce_loss(&m[0], &labels, &mask),
        );
        check(
            "sum",
            &[x],
            |t, v| t.sum(v[0]).unwrap(),
            |m| m[0].d.iter().sum(),
        );
    }
}

#[test]
fn composite_spmm_relu_matmul_cross_entropy() {
    let mut checked = 0;
    for s in 0..2 * SEEDS {
        let mut r = rng::seeded(800 + s);
        let n = r.random_range(4..9);
        let (f, c) = (r.random_range(2..5), r.random_range(2..5));
        let (adj, dense) = sparse(&mut r, n, n);
        let x = away_from_zero(&mut r, n, f);
        let w = random(&mut r, f, c);
        let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..c as u32)).collect();
        let mask = vec![true; n];
        // skip draws whose pre-activation sits on the ReLU kink
        let pre = dense.mm(&M::from_dense(&x));
        if pre.d.iter().any(|v| v.abs() < 10.0 * H) {
            continue;
        }
        check(
            "composite",
            &[x, w],
            |t, v| {
                let a = t.spmm(&adj, v[0]).unwrap();
                let h = t.relu(a).unwrap();
                let logits = t.matmul(h, v[1]).unwrap();
                t.cross_entropy_masked(logits, &labels, &mask).unwrap()
            },
            |m| common::ce_loss(&dense.mm(&m[0]).relu().mm(&m[1]), &labels, &mask),
        );
        checked += 1;
    }
    assert!(checked >= SEEDS as usize, "only {checked} usable draws");
}

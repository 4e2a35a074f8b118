//! Independent f64 reference implementations used as test oracles. Nothing
//! here calls into the library's kernels, tape or soup code.
#![allow(dead_code)]

use soupkit::gnn::{init_params, Arch, ModelParams, ModelSpec};
use soupkit::graph::{generate_sbm, CsrGraph, GraphData, SbmParams, Split};
use soupkit::tensor::DenseMat;

/// Row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct M {
    pub rows: usize,
    pub cols: usize,
    pub d: Vec<f64>,
}

impl M {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            d: vec![0.0; rows * cols],
        }
    }

    pub fn from_dense(m: &DenseMat) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            d: m.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.d[r * self.cols + c]
    }

    pub fn mm(&self, b: &M) -> M {
        assert_eq!(self.cols, b.rows);
        let mut out = M::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                for j in 0..b.cols {
                    out.d[i * b.cols + j] += a * b.at(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, b: &M) -> M {
        M {
            rows: self.rows,
            cols: self.cols,
            d: self.d.iter().zip(&b.d).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn add_row(&self, bias: &M) -> M {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.d[i * self.cols + j] += bias.d[j];
            }
        }
        out
    }

    pub fn relu(&self) -> M {
        M {
            rows: self.rows,
            cols: self.cols,
            d: self.d.iter().map(|&x| x.max(0.0)).collect(),
        }
    }
}

/// Dense propagation operator built from the adjacency pattern:
/// GCN uses D̃^{-1/2}(A+I)D̃^{-1/2}, SAGE the neighbour mean.
pub fn operator(graph: &impl GraphData, arch: Arch) -> M {
    let n = graph.num_nodes();
    let adj = graph.adjacency();
    let mut a = M::zeros(n, n);
    for r in 0..n {
        for &c in adj.row_cols(r) {
            a.d[r * n + c] = 1.0;
        }
    }
    let deg: Vec<f64> = (0..n).map(|r| (0..n).map(|c| a.at(r, c)).sum()).collect();
    let mut op = M::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            op.d[r * n + c] = match arch {
                Arch::Gcn => {
                    let e = a.at(r, c) + if r == c { 1.0 } else { 0.0 };
                    e / ((deg[r] + 1.0) * (deg[c] + 1.0)).sqrt()
                }
                Arch::Sage if deg[r] > 0.0 => a.at(r, c) / deg[r],
                Arch::Sage => 0.0,
            };
        }
    }
    op
}

pub type Layers = Vec<Vec<M>>;

pub fn to_f64(p: &ModelParams) -> Layers {
    p.layers()
        .iter()
        .map(|g| g.iter().map(M::from_dense).collect())
        .collect()
}

pub fn to_params(spec: &ModelSpec, layers: &Layers) -> ModelParams {
    let layers = layers
        .iter()
        .map(|g| {
            g.iter()
                .map(|m| {
                    DenseMat::from_vec(m.rows, m.cols, m.d.iter().map(|&v| v as f32).collect())
                        .unwrap()
                })
                .collect()
        })
        .collect();
    ModelParams::new(*spec, layers).unwrap()
}

/// Evaluation-mode forward.
pub fn forward(arch: Arch, layers: &Layers, op: &M, x: &M) -> M {
    let mut h = x.clone();
    for (l, g) in layers.iter().enumerate() {
        let out = match arch {
            Arch::Gcn => op.mm(&h.mm(&g[0])).add_row(&g[1]),
            Arch::Sage => h.mm(&g[0]).add(&op.mm(&h).mm(&g[1])).add_row(&g[2]),
        };
        h = if l + 1 < layers.len() {
            out.relu()
        } else {
            out
        };
    }
    h
}

/// Signs of every hidden pre-activation. A central difference is only
/// meaningful when neither probe flips one of them (crosses a ReLU kink).
pub fn relu_pattern(arch: Arch, layers: &Layers, op: &M, x: &M) -> Vec<bool> {
    let mut pattern = Vec::new();
    let mut h = x.clone();
    for g in &layers[..layers.len() - 1] {
        let pre = match arch {
            Arch::Gcn => op.mm(&h.mm(&g[0])).add_row(&g[1]),
            Arch::Sage => h.mm(&g[0]).add(&op.mm(&h).mm(&g[1])).add_row(&g[2]),
        };
        pattern.extend(pre.d.iter().map(|v| *v > 0.0));
        h = pre.relu();
    }
    pattern
}

/// Mean masked cross-entropy, natural log.
pub fn ce_loss(logits: &M, labels: &[u32], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for r in (0..logits.rows).filter(|&r| mask[r]) {
        let row = &logits.d[r * logits.cols..(r + 1) * logits.cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[r] as usize];
        count += 1;
    }
    total / count as f64
}

/// Arg-max accuracy, ties to the lowest class.
pub fn accuracy(logits: &M, labels: &[u32], mask: &[bool]) -> f64 {
    let mut hit = 0;
    let mut count = 0;
    for r in (0..logits.rows).filter(|&r| mask[r]) {
        let row = &logits.d[r * logits.cols..(r + 1) * logits.cols];
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        hit += (best == labels[r] as usize) as usize;
        count += 1;
    }
    hit as f64 / count as f64
}

/// Everything a reference evaluation needs, precomputed.
pub struct RefGraph {
    pub op: M,
    pub x: M,
    pub labels: Vec<u32>,
    pub val: Vec<bool>,
    pub arch: Arch,
}

impl RefGraph {
    pub fn new(graph: &impl GraphData, arch: Arch) -> Self {
        Self {
            op: operator(graph, arch),
            x: M::from_dense(graph.features()),
            labels: graph.labels().to_vec(),
            val: graph.mask(Split::Val).to_vec(),
            arch,
        }
    }

    pub fn val_acc(&self, layers: &Layers) -> f64 {
        accuracy(
            &forward(self.arch, layers, &self.op, &self.x),
            &self.labels,
            &self.val,
        )
    }

    pub fn val_loss(&self, layers: &Layers) -> f64 {
        ce_loss(
            &forward(self.arch, layers, &self.op, &self.x),
            &self.labels,
            &self.val,
        )
    }
}

/// Per-entry mean of `members`.
pub fn mean(members: &[&Layers]) -> Layers {
    let n = members.len() as f64;
    members[0]
        .iter()
        .enumerate()
        .map(|(l, g)| {
            g.iter()
                .enumerate()
                .map(|(k, m)| {
                    let mut out = M::zeros(m.rows, m.cols);
                    for mem in members {
                        for (o, v) in out.d.iter_mut().zip(&mem[l][k].d) {
                            *o += v;
                        }
                    }
                    out.d.iter_mut().for_each(|v| *v /= n);
                    out
                })
                .collect()
        })
        .collect()
}

pub fn lerp(a: &Layers, b: &Layers, t: f64) -> Layers {
    a.iter()
        .zip(b)
        .map(|(ga, gb)| {
            ga.iter()
                .zip(gb)
                .map(|(x, y)| M {
                    rows: x.rows,
                    cols: x.cols,
                    d: x.d
                        .iter()
                        .zip(&y.d)
                        .map(|(p, q)| (1.0 - t) * p + t * q)
                        .collect(),
                })
                .collect()
        })
        .collect()
}

/// Per-layer softmax of a raw `[i][l]` alpha grid, then Σ_i ᾱ_i^l W_i^l.
pub fn alpha_soup(members: &[Layers], raw: &[Vec<f64>]) -> Layers {
    let layers = members[0].len();
    (0..layers)
        .map(|l| {
            let max = raw.iter().map(|r| r[l]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = raw.iter().map(|r| (r[l] - max).exp()).sum();
            let w: Vec<f64> = raw.iter().map(|r| (r[l] - max).exp() / z).collect();
            members[0][l]
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let mut out = M::zeros(m.rows, m.cols);
                    for (i, mem) in members.iter().enumerate() {
                        for (o, v) in out.d.iter_mut().zip(&mem[l][k].d) {
                            *o += w[i] * v;
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &Layers, b: &ModelParams) -> f64 {
    let b = to_f64(b);
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .flat_map(|(x, y)| x.d.iter().zip(&y.d).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// 20-node, 3-class SBM with 4 features.
pub fn graph20(seed: u64) -> CsrGraph {
    generate_sbm(&SbmParams {
        nodes: 20,
        classes: 3,
        p_in: 0.4,
        p_out: 0.05,
        feat_dim: 4,
        noise: 0.5,
        split: [0.4, 0.4, 0.2],
        seed,
    })
    .unwrap()
}

pub fn spec(arch: Arch, in_dim: usize, hidden: usize, out_dim: usize) -> ModelSpec {
    ModelSpec {
        arch,
        num_layers: 2,
        in_dim,
        hidden_dim: hidden,
        out_dim,
        dropout: 0.0,
    }
}

/// `n` independently initialised, soup-compatible models.
pub fn random_members(spec: &ModelSpec, n: usize, seed: u64) -> Vec<ModelParams> {
    (0..n)
        .map(|i| init_params(spec, seed * 1000 + i as u64).unwrap())
        .collect()
}

/// Relative error with a floor so entries that are numerically zero are
/// compared absolutely.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Literal Alg.-1 greedy souping over f64 copies: returns the kept
/// ingredients in admission order, the accuracy of every tentative soup
/// and the final soup.
pub fn greedy_oracle(members: &[Layers], g: &RefGraph) -> (Vec<usize>, Vec<f64>, Layers) {
    let order = sorted_by_acc(members, g);
    let mut kept: Vec<usize> = Vec::new();
    let mut accs = Vec::new();
    let mut current = f64::NEG_INFINITY;
    let mut soup = None;
    for i in order {
        let pool: Vec<&Layers> = kept.iter().chain([&i]).map(|&j| &members[j]).collect();
        let tentative = mean(&pool);
        let acc = g.val_acc(&tentative);
        accs.push(acc);
        if acc >= current {
            current = acc;
            kept.push(i);
            soup = Some(tentative);
        }
    }
    (kept, accs, soup.unwrap())
}

/// Literal Alg.-2 interpolated souping: returns the acceptance flag and
/// accuracy of every tentative soup, and the final soup.
pub fn gis_oracle(members: &[Layers], g: &RefGraph, steps: usize) -> (Vec<bool>, Vec<f64>, Layers) {
    let order = sorted_by_acc(members, g);
    let mut soup = members[order[0]].clone();
    let mut current = g.val_acc(&soup);
    let (mut flags, mut accs) = (Vec::new(), Vec::new());
    for &i in &order[1..] {
        for j in 0..steps {
            let t = j as f64 / (steps - 1) as f64;
            let tentative = lerp(&soup, &members[i], t);
            let acc = g.val_acc(&tentative);
            let ok = acc >= current;
            if ok {
                soup = tentative;
                current = acc;
            }
            flags.push(ok);
            accs.push(acc);
        }
    }
    (flags, accs, soup)
}

fn sorted_by_acc(members: &[Layers], g: &RefGraph) -> Vec<usize> {
    let accs: Vec<f64> = members.iter().map(|m| g.val_acc(m)).collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    // stable sort: equal accuracies keep ascending index
    order.sort_by(|&a, &b| accs[b].partial_cmp(&accs[a]).unwrap());
    order
}

pub struct AlphaCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Tape gradient of the validation loss with respect to the raw alphas of a
/// 3-member, 2-layer GCN soup on a 20-node graph, against central
/// differences of the f64 reference soup (h = 1e-3).
pub fn alpha_gradient_check(seed: u64) -> AlphaCheck {
    use rand::Rng;
    use soupkit::gnn::{forward_tape, Mode, ModelInput};
    use soupkit::soup::soup_on_tape;
    use soupkit::tensor::GradTape;

    const H: f64 = 1e-3;
    let graph = graph20(seed);
    let spec = spec(Arch::Gcn, graph.feat_dim(), 6, graph.num_classes());
    let members = random_members(&spec, 3, seed + 7);
    let layers = spec.num_layers;
    let mut r = soupkit::rng::seeded(seed ^ 0xa1);
    // raw[i][l]
    let raw: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            (0..layers)
                .map(|_| r.random_range(-1.0..1.0) as f32 as f64)
                .collect()
        })
        .collect();

    let input = ModelInput::new(&graph, Arch::Gcn);
    let mut tape = GradTape::new();
    let raw_lxn = DenseMat::from_vec(
        layers,
        3,
        (0..layers)
            .flat_map(|l| raw.iter().map(move |ri| ri[l] as f32))
            .collect(),
    )
    .unwrap();
    let raw_var = tape.leaf(raw_lxn, true);
    let weights = soup_on_tape(&mut tape, &members, raw_var, true).unwrap();
    let logits = forward_tape(&mut tape, &spec, &weights, &input, Mode::Eval).unwrap();
    let loss = tape
        .cross_entropy_masked(logits, graph.labels(), graph.mask(Split::Val))
        .unwrap();
    let grads = tape.backward(loss).unwrap();
    let grad = grads.get(raw_var).unwrap();

    let rg = RefGraph::new(&graph, Arch::Gcn);
    let f64_members: Vec<Layers> = members.iter().map(to_f64).collect();
    let pattern =
        |raw: &[Vec<f64>]| relu_pattern(Arch::Gcn, &alpha_soup(&f64_members, raw), &rg.op, &rg.x);
    let base_pattern = pattern(&raw);
    let mut out = AlphaCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..3 {
        for l in 0..layers {
            let mut plus = raw.clone();
            plus[i][l] += H;
            let mut minus = raw.clone();
            minus[i][l] -= H;
            if pattern(&plus) != base_pattern || pattern(&minus) != base_pattern {
                out.skipped += 1;
                continue;
            }
            let fd = (rg.val_loss(&alpha_soup(&f64_members, &plus))
                - rg.val_loss(&alpha_soup(&f64_members, &minus)))
                / (2.0 * H);
            let an = grad.get(l, i) as f64;
            out.max_rel_err = out.max_rel_err.max(rel_err(an, fd, 1e-4));
            out.checked += 1;
        }
    }
    out
}

use super::Arch;
use crate::graph::{GraphData, Split};
use crate::tensor::{CsrMat, DenseMat};

/// A graph prepared for one architecture: the propagation operator is built
/// once, everything else is borrowed.
///
/// GCN uses `D̃^{-1/2} (A + I) D̃^{-1/2}` with `d̃ = deg + 1`. SAGE uses the
/// row-normalized adjacency `D^{-1} A`; a node without neighbors gets an empty
/// row, so its neighbor mean is the zero vector.
#[derive(Debug)]
pub struct ModelInput<'g> {
    arch: Arch,
    operator: CsrMat,
    features: &'g DenseMat,
    labels: &'g [u32],
    masks: [&'g [bool]; 3],
    num_classes: usize,
}

impl<'g> ModelInput<'g> {
    pub fn new(graph: &'g impl GraphData, arch: Arch) -> Self {
        let adj = graph.adjacency();
        let operator = match arch {
            Arch::Gcn => gcn_operator(adj),
            Arch::Sage => mean_operator(adj),
        };
        Self {
            arch,
            operator,
            features: graph.features(),
            labels: graph.labels(),
            masks: Split::ALL.map(|s| graph.mask(s)),
            num_classes: graph.num_classes(),
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn operator(&self) -> &CsrMat {
        &self.operator
    }

    pub fn features(&self) -> &'g DenseMat {
        self.features
    }

    pub fn labels(&self) -> &'g [u32] {
        self.labels
    }

    pub fn mask(&self, split: Split) -> &'g [bool] {
        self.masks[match split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }]
    }

    pub fn num_nodes(&self) -> usize {
        self.operator.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

fn gcn_operator(adj: &CsrMat) -> CsrMat {
    let n = adj.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|r| 1.0 / ((adj.degree(r) + 1) as f64).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(adj.nnz() + n);
    let mut vals = Vec::with_capacity(adj.nnz() + n);
    row_ptr.push(0);
    for r in 0..n {
        let mut self_done = false;
        for &c in adj.row_cols(r) {
            if !self_done && c > r {
                col_idx.push(r);
                vals.push((inv_sqrt[r] * inv_sqrt[r]) as f32);
                self_done = true;
            }
            col_idx.push(c);
            vals.push((inv_sqrt[r] * inv_sqrt[c]) as f32);
        }
        if !self_done {
            col_idx.push(r);
            vals.push((inv_sqrt[r] * inv_sqrt[r]) as f32);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMat::new(n, n, row_ptr, col_idx, vals).expect("normalized adjacency is canonical")
}

fn mean_operator(adj: &CsrMat) -> CsrMat {
    let n = adj.rows();
    let vals = (0..n)
        .flat_map(|r| {
            let d = adj.degree(r);
            std::iter::repeat_n((1.0 / d as f64) as f32, d)
        })
        .collect();
    CsrMat::new(n, n, adj.row_ptr().to_vec(), adj.col_idx().to_vec(), vals)
        .expect("same pattern as adjacency")
}

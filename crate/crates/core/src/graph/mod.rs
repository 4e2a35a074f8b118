//! Graph storage, synthetic generation, file I/O, partitioning and subgraph
//! assembly.

mod io;
mod partition;
mod sbm;
mod subgraph;

pub use io::{load_graph, read_graph, save_graph, write_graph, GRAPH_MAGIC, GRAPH_VERSION};
pub use partition::{choose_partitions, partition, Partitioning};
pub use sbm::{generate_sbm, SbmParams};
pub use subgraph::{assemble_subgraph, SubgraphView};

use thiserror::Error;

use crate::tensor::{CsrMat, DenseMat, TensorError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("adjacency is not symmetric: edge ({row}, {col}) has no reverse")]
    Asymmetric { row: usize, col: usize },
    #[error("self-loop stored at node {0}")]
    SelfLoop(usize),
    #[error("node {0} belongs to more than one split")]
    MaskOverlap(usize),
    #[error("malformed graph file ({section}): {detail}")]
    Format {
        section: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Node split used for training, validation or testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Anything a GNN can run on: a full graph or an assembled subgraph.
pub trait GraphData {
    fn adjacency(&self) -> &CsrMat;
    fn features(&self) -> &DenseMat;
    fn labels(&self) -> &[u32];
    fn mask(&self, split: Split) -> &[bool];
    fn num_classes(&self) -> usize;

    fn num_nodes(&self) -> usize {
        self.adjacency().rows()
    }

    fn count(&self, split: Split) -> usize {
        self.mask(split).iter().filter(|&&m| m).count()
    }
}

/// Immutable undirected graph with node features, labels and split masks.
///
/// The adjacency is binary, symmetric and free of self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    adjacency: CsrMat,
    features: DenseMat,
    labels: Vec<u32>,
    num_classes: usize,
    masks: [Vec<bool>; 3],
}

impl CsrGraph {
    pub fn new(
        adjacency: CsrMat,
        features: DenseMat,
        labels: Vec<u32>,
        num_classes: usize,
        masks: [Vec<bool>; 3],
    ) -> Result<Self, GraphError> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(GraphError::InvalidParameter(
                "adjacency must be square".into(),
            ));
        }
        if features.rows() != n {
            return Err(GraphError::InvalidParameter(format!(
                "features have {} rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n || masks.iter().any(|m| m.len() != n) {
            return Err(GraphError::InvalidParameter(
                "labels and masks must have one entry per node".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(GraphError::InvalidParameter(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        for r in 0..n {
            for &c in adjacency.row_cols(r) {
                if c == r {
                    return Err(GraphError::SelfLoop(r));
                }
                if !adjacency.contains(c, r) {
                    return Err(GraphError::Asymmetric { row: r, col: c });
                }
            }
        }
        if adjacency.vals().iter().any(|&v| v != 1.0) {
            return Err(GraphError::InvalidParameter(
                "adjacency must be binary".into(),
            ));
        }
        for v in 0..n {
            if masks.iter().filter(|m| m[v]).count() > 1 {
                return Err(GraphError::MaskOverlap(v));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            num_classes,
            masks,
        })
    }

    /// Builds a graph from an undirected edge list (each pair listed once or
    /// twice; duplicates are merged).
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: DenseMat,
        labels: Vec<u32>,
        num_classes: usize,
        masks: [Vec<bool>; 3],
    ) -> Result<Self, GraphError> {
        let mut t = Vec::with_capacity(edges.len() * 2);
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            t.push((a, b, 1.0));
            t.push((b, a, 1.0));
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        t.dedup_by_key(|e| (e.0, e.1));
        let adjacency = CsrMat::from_triplets(num_nodes, num_nodes, t)?;
        Self::new(adjacency, features, labels, num_classes, masks)
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row_cols(v)
    }

    /// Node ids in the given split, ascending.
    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&v| self.masks[split.index()][v])
            .collect()
    }

    /// Returns a copy with node `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.num_nodes();
        let mut edges = Vec::with_capacity(self.num_edges());
        for r in 0..n {
            for &c in self.neighbors(r) {
                edges.push((perm[r], perm[c], 1.0));
            }
        }
        let adjacency = CsrMat::from_triplets(n, n, edges)?;
        let mut features = DenseMat::zeros(n, self.feat_dim());
        let mut labels = vec![0; n];
        let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
        for v in 0..n {
            features
                .row_mut(perm[v])
                .copy_from_slice(self.features.row(v));
            labels[perm[v]] = self.labels[v];
            for s in 0..3 {
                masks[s][perm[v]] = self.masks[s][v];
            }
        }
        Self::new(adjacency, features, labels, self.num_classes, masks)
    }
}

impl GraphData for CsrGraph {
    fn adjacency(&self) -> &CsrMat {
        &self.adjacency
    }
    fn features(&self) -> &DenseMat {
        &self.features
    }
    fn labels(&self) -> &[u32] {
        &self.labels
    }
    fn mask(&self, split: Split) -> &[bool] {
        &self.masks[split.index()]
    }
    fn num_classes(&self) -> usize {
        self.num_classes
    }
}

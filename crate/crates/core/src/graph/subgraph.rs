use super::{CsrGraph, GraphData, GraphError, Partitioning, Split};
use crate::tensor::{CsrMat, DenseMat};

/// Node-induced subgraph over the union of selected parts.
///
/// Nodes are renumbered in ascending order of their original ids, so
/// selecting every part reproduces the parent graph exactly. An edge is kept
/// iff both endpoints are selected, including edges that cross between two
/// selected parts.
#[derive(Debug)]
pub struct SubgraphView<'g> {
    parent: &'g CsrGraph,
    selected: Vec<usize>,
    node_map: Vec<usize>,
    adjacency: CsrMat,
    features: DenseMat,
    labels: Vec<u32>,
    masks: [Vec<bool>; 3],
}

impl SubgraphView<'_> {
    pub fn parent(&self) -> &CsrGraph {
        self.parent
    }

    pub fn selected_parts(&self) -> &[usize] {
        &self.selected
    }

    /// `node_map()[local] = original id`.
    pub fn node_map(&self) -> &[usize] {
        &self.node_map
    }

    pub fn original_id(&self, local: usize) -> usize {
        self.node_map[local]
    }
}

pub fn assemble_subgraph<'g>(
    graph: &'g CsrGraph,
    partitioning: &Partitioning,
    selected: &[usize],
) -> Result<SubgraphView<'g>, GraphError> {
    if selected.is_empty() {
        return Err(GraphError::InvalidParameter(
            "empty partition selection".into(),
        ));
    }
    if partitioning.num_nodes() != graph.num_nodes() {
        return Err(GraphError::InvalidParameter(
            "partitioning does not cover this graph".into(),
        ));
    }
    let k = partitioning.k();
    let mut chosen = vec![false; k];
    for &p in selected {
        if p >= k {
            return Err(GraphError::InvalidParameter(format!(
                "part index {p} >= k = {k}"
            )));
        }
        if std::mem::replace(&mut chosen[p], true) {
            return Err(GraphError::InvalidParameter(format!(
                "part {p} selected twice"
            )));
        }
    }
    let mut selected = selected.to_vec();
    selected.sort_unstable();

    let n = graph.num_nodes();
    let node_map: Vec<usize> = (0..n)
        .filter(|&v| chosen[partitioning.part_of(v)])
        .collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in node_map.iter().enumerate() {
        local[v] = i;
    }

    let mut row_ptr = Vec::with_capacity(node_map.len() + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for &v in &node_map {
        // local ids are monotone in original ids, so columns stay sorted
        col_idx.extend(
            graph
                .neighbors(v)
                .iter()
                .filter(|&&u| local[u] != usize::MAX)
                .map(|&u| local[u]),
        );
        row_ptr.push(col_idx.len());
    }
    let m = node_map.len();
    let nnz = col_idx.len();
    let adjacency = CsrMat::new(m, m, row_ptr, col_idx, vec![1.0; nnz])?;

    let parent_features = graph.features();
    let mut features = DenseMat::zeros(m, parent_features.cols());
    for (i, &v) in node_map.iter().enumerate() {
        features.row_mut(i).copy_from_slice(parent_features.row(v));
    }
    let labels = node_map.iter().map(|&v| graph.labels()[v]).collect();
    let masks = Split::ALL.map(|s| node_map.iter().map(|&v| graph.mask(s)[v]).collect());

    Ok(SubgraphView {
        parent: graph,
        selected,
        node_map,
        adjacency,
        features,
        labels,
        masks,
    })
}

impl GraphData for SubgraphView<'_> {
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
        self.parent.num_classes()
    }
}

//! Validation-balanced partitioning by multi-source BFS region growing.
//!
//! Seeds are spread with a farthest-first sweep (the first seed is drawn from
//! the seed RNG). Parts then grow one node at a time. While validation nodes
//! remain unassigned only the parts holding the fewest validation nodes may
//! grow; this keeps per-part validation counts within one of each other at
//! every step. Among eligible parts the smallest one with a non-empty BFS
//! frontier grows. If no eligible part has a frontier (its component is used
//! up), the smallest eligible part restarts from the lowest unassigned node.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::{CsrGraph, GraphData, GraphError, Split};
use crate::rng;

/// Assignment of every node to one of `k` parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    k: usize,
    assign: Vec<usize>,
    val_counts: Vec<usize>,
}

impl Partitioning {
    /// Wraps an explicit assignment, recomputing validation counts from `graph`.
    pub fn from_assignment(
        graph: &impl GraphData,
        k: usize,
        assign: Vec<usize>,
    ) -> Result<Self, GraphError> {
        if assign.len() != graph.num_nodes() {
            return Err(GraphError::InvalidParameter(format!(
                "assignment covers {} nodes, graph has {}",
                assign.len(),
                graph.num_nodes()
            )));
        }
        if let Some(&bad) = assign.iter().find(|&&p| p >= k) {
            return Err(GraphError::InvalidParameter(format!(
                "part index {bad} >= k = {k}"
            )));
        }
        let mut val_counts = vec![0; k];
        for (v, &p) in assign.iter().enumerate() {
            if graph.mask(Split::Val)[v] {
                val_counts[p] += 1;
            }
        }
        Ok(Self {
            k,
            assign,
            val_counts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.assign[v]
    }

    pub fn val_counts(&self) -> &[usize] {
        &self.val_counts
    }

    pub fn num_nodes(&self) -> usize {
        self.assign.len()
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &p in &self.assign {
            sizes[p] += 1;
        }
        sizes
    }

    pub fn part_nodes(&self, part: usize) -> Vec<usize> {
        (0..self.assign.len())
            .filter(|&v| self.assign[v] == part)
            .collect()
    }

    /// `max(val) - min(val) <= ceil(0.1 * mean(val)) + 1`.
    pub fn is_balanced(&self) -> bool {
        let max = *self.val_counts.iter().max().unwrap_or(&0);
        let min = *self.val_counts.iter().min().unwrap_or(&0);
        let mean = self.val_counts.iter().sum::<usize>() as f64 / self.k as f64;
        max - min <= (0.1 * mean).ceil() as usize + 1
    }

    /// Number of undirected edges whose endpoints lie in different parts.
    pub fn edge_cut(&self, graph: &CsrGraph) -> usize {
        (0..graph.num_nodes())
            .map(|v| {
                graph
                    .neighbors(v)
                    .iter()
                    .filter(|&&u| u > v && self.assign[u] != self.assign[v])
                    .count()
            })
            .sum()
    }
}

fn bfs_distances(graph: &CsrGraph, source: usize, dist: &mut [usize]) {
    let mut queue = VecDeque::from([source]);
    let mut local = vec![usize::MAX; graph.num_nodes()];
    local[source] = 0;
    while let Some(v) = queue.pop_front() {
        for &u in graph.neighbors(v) {
            if local[u] == usize::MAX {
                local[u] = local[v] + 1;
                queue.push_back(u);
            }
        }
    }
    for (d, l) in dist.iter_mut().zip(local) {
        *d = (*d).min(l);
    }
}

fn farthest_first_seeds(graph: &CsrGraph, k: usize, seed: u64) -> Vec<usize> {
    let n = graph.num_nodes();
    let first = rng::stream(&[seed, 0x9a27]).random_range(0..n);
    let mut seeds = vec![first];
    let mut dist = vec![usize::MAX; n];
    bfs_distances(graph, first, &mut dist);
    while seeds.len() < k {
        // unreachable nodes have distance usize::MAX and are picked first
        let next = (0..n)
            .filter(|v| !seeds.contains(v))
            .max_by(|&a, &b| dist[a].cmp(&dist[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a candidate");
        seeds.push(next);
        bfs_distances(graph, next, &mut dist);
    }
    seeds
}

const UNASSIGNED: usize = usize::MAX;

struct Grower<'g> {
    graph: &'g CsrGraph,
    is_val: &'g [bool],
    assign: Vec<usize>,
    val_counts: Vec<usize>,
    sizes: Vec<usize>,
    frontiers: Vec<VecDeque<usize>>,
    unassigned: usize,
    val_left: usize,
}

impl Grower<'_> {
    fn claim(&mut self, part: usize, v: usize) {
        self.assign[v] = part;
        self.sizes[part] += 1;
        if self.is_val[v] {
            self.val_counts[part] += 1;
            self.val_left -= 1;
        }
        self.unassigned -= 1;
        let assign = &self.assign;
        self.frontiers[part].extend(
            self.graph
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&u| assign[u] == UNASSIGNED),
        );
    }

    fn eligible(&self, part: usize, min_val: usize) -> bool {
        self.val_left == 0 || self.val_counts[part] == min_val
    }

    fn prune(&mut self, part: usize) {
        while self.frontiers[part]
            .front()
            .is_some_and(|&v| self.assign[v] != UNASSIGNED)
        {
            self.frontiers[part].pop_front();
        }
    }

    /// The part that grows next: smallest eligible part with a live frontier,
    /// else the smallest eligible part.
    fn next_part(&mut self) -> usize {
        let k = self.sizes.len();
        let min_val = *self.val_counts.iter().min().expect("k >= 2");
        for p in 0..k {
            if self.eligible(p, min_val) {
                self.prune(p);
            }
        }
        let by_size = |p: &usize| (self.sizes[*p], *p);
        (0..k)
            .filter(|&p| self.eligible(p, min_val) && !self.frontiers[p].is_empty())
            .min_by_key(by_size)
            .or_else(|| {
                (0..k)
                    .filter(|&p| self.eligible(p, min_val))
                    .min_by_key(by_size)
            })
            .expect("some part holds the minimum validation count")
    }

    fn pop_frontier(&mut self, part: usize) -> Option<usize> {
        self.prune(part);
        self.frontiers[part].pop_front()
    }
}

/// Splits `graph` into `k` parts with balanced validation-node counts.
pub fn partition(graph: &CsrGraph, k: usize, seed: u64) -> Result<Partitioning, GraphError> {
    let n = graph.num_nodes();
    if k < 2 {
        return Err(GraphError::InvalidParameter(format!(
            "need k >= 2 parts, got {k}"
        )));
    }
    if k > n {
        return Err(GraphError::InvalidParameter(format!(
            "k = {k} exceeds node count {n}"
        )));
    }
    let is_val = graph.mask(Split::Val);
    let total_val = is_val.iter().filter(|&&m| m).count();
    if total_val < k {
        return Err(GraphError::InvalidParameter(format!(
            "graph has {total_val} validation nodes, fewer than k = {k}"
        )));
    }

    let mut grower = Grower {
        graph,
        is_val,
        assign: vec![UNASSIGNED; n],
        val_counts: vec![0; k],
        sizes: vec![0; k],
        frontiers: vec![VecDeque::new(); k],
        unassigned: n,
        val_left: total_val,
    };
    for (part, s) in farthest_first_seeds(graph, k, seed).into_iter().enumerate() {
        grower.claim(part, s);
    }

    let mut restart_cursor = 0;
    while grower.unassigned > 0 {
        let part = grower.next_part();
        let node = match grower.pop_frontier(part) {
            Some(v) => v,
            None => {
                while grower.assign[restart_cursor] != UNASSIGNED {
                    restart_cursor += 1;
                }
                restart_cursor
            }
        };
        grower.claim(part, node);
    }
    let assign = grower.assign;

    let result = Partitioning::from_assignment(graph, k, assign)?;
    debug_assert!(result.is_balanced());
    Ok(result)
}

/// Draws `r` distinct part indices uniformly at random, returned ascending.
/// Deterministic in `(seed, epoch)`.
pub fn choose_partitions(
    partitioning: &Partitioning,
    r: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<usize>, GraphError> {
    let k = partitioning.k();
    if r == 0 || r > k {
        return Err(GraphError::InvalidParameter(format!(
            "partition budget r = {r} must be in 1..={k}"
        )));
    }
    let mut picked = index::sample(&mut rng::stream(&[seed, epoch, 0x5e1ec7]), k, r).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

//! Train populations of small graph neural networks from one shared
//! initialization and combine ("soup") their parameters into a single model.
//!
//! Five souping strategies are provided in [`soup`]: uniform averaging,
//! greedy selection, greedy interpolation, learned per-layer interpolation
//! ratios, and the partition-based variant of the latter that trains the
//! ratios on random unions of graph parts to bound memory.

pub mod bench;
pub mod gnn;
pub mod graph;
pub mod ingredients;
pub mod rng;
pub mod soup;
pub mod tensor;

//! Interaction-graph complexity: entropy, sparsity penalties, majorization.

pub mod edges;
pub mod entropy;
pub mod penalty;

pub use edges::EdgeIndex;
pub use entropy::{
    brute_force_min_entropy, degree_distribution, graph_entropy, majorizes, min_graph_entropy, phi_sum,
    robin_hood_pair, verify_hlp, DegreeDistribution,
};
pub use penalty::{r_degree, r_density, regularized_loss, PenaltyKind};

//! Cluster trees and samplet bases.

mod basis;
mod tree;

pub use basis::{
    cluster_moments, default_leaf_capacity, moment_count, monomial_exponents, NodeTransform,
    SampletBasis,
};
pub use tree::{BoundingBox, ClusterNode, ClusterTree};

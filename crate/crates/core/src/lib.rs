//! Multiscale interpolation with rescaled Matérn kernels, solved level by
//! level in samplet coordinates.
//!
//! The pipeline: a [`Hierarchy`] of point sets, one [`SampletBasis`] per
//! level, compressed kernel blocks ([`CompressedMatrix`]) assembled into a
//! [`MultiscaleSystem`], and block forward substitution with conjugate
//! gradients ([`multiscale_solve`]). Everything is generic over `f32`/`f64`
//! through [`Scalar`]; the aliases below fix the precision.

pub mod compression;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod samplets;
pub mod scalar;
pub mod solver;

pub use compression::{compress_block, CompressedMatrix, CompressionParams};
pub use error::{Error, Result};
pub use geometry::{Hierarchy, PointSet};
pub use kernels::{KernelFamily, KernelSpec};
pub use samplets::{ClusterTree, SampletBasis};
pub use scalar::Scalar;
pub use solver::{
    cg_solve, multiscale_solve, Interpolant, MultiscaleSystem, Preconditioner, SolveConfig,
    SolveReport, SystemParams,
};

pub type PointSet64 = PointSet<f64>;
pub type PointSet32 = PointSet<f32>;
pub type Hierarchy64 = Hierarchy<f64>;
pub type Hierarchy32 = Hierarchy<f32>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type SampletBasis64 = SampletBasis<f64>;
pub type SampletBasis32 = SampletBasis<f32>;
pub type CompressedMatrix64 = CompressedMatrix<f64>;
pub type CompressedMatrix32 = CompressedMatrix<f32>;
pub type MultiscaleSystem64 = MultiscaleSystem<f64>;
pub type MultiscaleSystem32 = MultiscaleSystem<f32>;

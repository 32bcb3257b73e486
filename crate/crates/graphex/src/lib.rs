//! Modelling bipartite relational data (users consuming items) as sparse
//! exchangeable random graphs.
//!
//! The crate covers the full desk workflow:
//!
//! * [`graph`]: compact bipartite graph storage and `(p,q)`-vertex
//!   subsampling, the canonical subsampling scheme under which these models
//!   are self-similar;
//! * [`ggp`]: sampling the atoms of a generalized gamma process restricted
//!   to a bounded label interval;
//! * [`simulate`]: forward simulation of the sparse Poisson matrix
//!   factorization generative model;
//! * [`sparsity`]: the edge-density-versus-sampling-level diagnostic with a
//!   dense/sparse verdict;
//! * [`estimators`]: degree-based plug-in estimation of the sparsity
//!   parameters and graph sizes;
//! * [`split`]: principled test-train splitting by user/item subsampling;
//! * [`inference`]: coordinate-ascent variational inference with
//!   gamma mean-field factors, truncated-Poisson edge allocations, and
//!   Monte Carlo leftover-mass corrections;
//! * [`evaluate`]: posterior-predictive sampling, summary checks, and
//!   recommendation scoring (recall@M, nDCG).
//!
//! The crate is `no_std` (with `alloc`): it performs no IO and takes all
//! randomness from explicit 64-bit seeds through counter-based streams, so
//! every operation is reproducible bit for bit. File formats and the command
//! line live in the companion `graphex-cli` crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style validations are deliberate: they reject NaN along with
// the out-of-range values. Indexed loops walk parallel arrays in the
// numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod estimators;
pub mod evaluate;
pub mod ggp;
pub mod graph;
pub mod inference;
pub mod math;
pub mod rng;
pub mod simulate;
pub mod sparsity;
pub mod split;

pub use graph::{BipartiteGraph, SamplingRecord, VertexId};
pub use inference::{FitConfig, FitMode, VariationalState};
pub use simulate::ModelHyperparams;

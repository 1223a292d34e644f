//! Low-rank + locally-sparse subspace decomposition of mesh-indexed
//! morphometry, and the univariate morphometry index (UMI) pipeline built
//! on top of it.
//!
//! * [`mesh`]: surface template, one-ring groups, group shrinkage.
//! * [`solver`]: factorized stable principal component pursuit.
//! * [`roi`]: permutation / FDR region-of-interest selection and fold stability.
//! * [`umi`]: atrophy templates and per-subject index scoring.
//! * [`stats`]: group tests, effect sizes, sample size, ROC, survival, enrichment.
//! * [`cohort`], [`synth`], [`pipeline`]: ingestion, synthetic cohorts, orchestration.

pub mod cohort;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod mesh;
mod par;
pub mod pipeline;
pub mod rng;
pub mod roi;
pub mod solver;
pub mod stats;
pub mod synth;
pub mod umi;

pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
pub use mesh::{LocalGroups, TriangleMesh, VertexMap};
pub use solver::{decompose, default_params, DecompositionResult, SolverConfig};

//! Block-wise genome-wide association scanning for high-dimensional
//! phenotypes.
//!
//! The pipeline partitions the genome into LD-blocks, scores each block
//! against the full phenotype vector with one of several multivariate
//! methods (CCA, sparse CCA, graph-fused lasso regression, latent-factor
//! residualization, pairwise regression, PCA, MANOVA), and calibrates
//! block significance with max-statistic permutation thresholds.

pub mod baselines;
pub mod blocks;
pub mod cca;
pub mod error;
pub mod factors;
pub mod fmt;
pub mod gflasso;
pub mod io;
pub mod report;
pub mod scan;
pub mod scca;
pub mod score;
pub mod significance;
pub mod simulate;

pub use error::{Error, Result};

//! Dense point-to-point correspondence between two articulated 3-D shapes
//! given as voxel sets.
//!
//! The pipeline has four stages:
//!
//! 1. [`graph`]: build a locally connected weighted graph over the voxels
//!    and its normalized Laplacian.
//! 2. [`embed`]: map the graph into `R^K` with the K smallest nonzero
//!    Laplacian eigenpairs (Laplacian eigenmap).
//! 3. [`align`]: match the eigenfunctions of the two embeddings through
//!    their histogram signatures, resolving permutation and sign, which
//!    yields an initial K×K orthogonal transform.
//! 4. [`em`]: robust point registration of the two embedded sets under an
//!    orthogonal transform, via EM on a Gaussian mixture with a uniform
//!    outlier component.
//!
//! [`synth`], [`eval`] and [`pipeline`] provide synthetic articulated test
//! shapes with ground truth, evaluation metrics, and the end-to-end driver
//! used by the CLI.
//!
//! With the default `parallel` feature the inner loops (neighbor
//! enumeration, sparse matrix-vector products, dissimilarity matrix,
//! E-step) run on rayon; without it everything falls back to sequential
//! code with identical results.

pub mod align;
pub mod em;
pub mod embed;
pub mod eval;
pub mod graph;
pub mod hungarian;
pub mod par;
pub mod pipeline;
pub mod sparse;
pub mod synth;
pub mod voxel;

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: voxel set has no points")]
    EmptyInput,
    #[error("degenerate graph: largest connected component has {size} nodes, need at least {min}")]
    DegenerateGraph { size: usize, min: usize },
    #[error("eigensolver failed to converge: {0}")]
    SolverFailure(String),
    #[error("insufficient nodes: requested {requested} eigenpairs from a graph with {nodes} nodes")]
    InsufficientNodes { requested: usize, nodes: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("histogram range too small: |u| up to {max_abs} exceeds range {range}")]
    RangeTooSmall { max_abs: f64, range: f64 },
    #[error("histogram bin mismatch: {0} vs {1} bins")]
    BinMismatch(usize, usize),
    #[error("no eigenfunction pairs retained after pruning (threshold {threshold})")]
    NoRetainedPairs { threshold: f64 },
    #[error("degenerate spectrum: eigenvalue gap {gap} below 1e-9")]
    DegenerateSpectrum { gap: f64 },
    #[error("covariance numerically singular (condition number above 1e12)")]
    SingularCovariance,
    #[error("zero inlier mass in M-step")]
    ZeroInlierMass,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("ground truth missing: {0}")]
    MissingTruth(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The underlying error, unwrapping any stage tag.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Message-passing preprocessing and moment normalization for semi-supervised
//! node classification on chronologically split temporal graphs.
//!
//! A chronological split trains on historical nodes and predicts the most
//! recent ones. Because node connectivity depends on time distance, the
//! aggregated messages of train and test nodes drift apart even when the raw
//! features do not. This crate implements graph rewrites (`mmp`, `pmp`,
//! `genpmp`) that make the first moment of the aggregated message independent
//! of a node's timestamp, and post-hoc normalizers (`pny`, `jjnorm`) that do
//! the same for the second moment. A temporal stochastic block model
//! ([`tsbm`]) generates synthetic benchmark graphs with known ground truth,
//! and [`nn`] provides SGC/GCN baselines to measure the effect end to end.
//!
//! The numerical kernels ([`numerics`], [`propagation`], the 1-D Wasserstein
//! distance in [`diagnostics`]) are generic over the scalar type through
//! `num-traits`; the graph pipeline itself runs in `f64` via the aliases
//! exported at the crate root ([`Mat`], [`Adjacency`]).

pub mod connectivity;
pub mod diagnostics;
pub mod experiment;
pub mod graph;
pub mod moment_align;
pub mod nn;
pub mod numerics;
pub mod propagation;
pub mod scalar;
pub mod tsbm;

pub use scalar::Scalar;

/// Dense matrix with the crate-default scalar.
pub type Mat = numerics::DenseMatrix<f64>;
/// Directed weighted adjacency with the crate-default scalar.
pub type Adjacency = graph::WeightedAdjacency<f64>;
/// Time-distance profile with the crate-default scalar.
pub type Profile = propagation::TimeProfile<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("graph: {0}")]
    Graph(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("eigensolver did not converge")]
    EighNoConvergence,
    #[error("estimation: {0}")]
    Estimate(String),
    #[error("training: {0}")]
    Train(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

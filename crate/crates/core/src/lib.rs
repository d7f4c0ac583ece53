//! Community detection in logit-link degree-corrected block models.
//!
//! The crate generates networks from the model, clusters them with the
//! SCORE spectral method, and refines the clustering by repeatedly
//! refitting the model and reweighting the adjacency matrix.

pub mod error;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod refit;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, EdgeWeights};
pub use matrix::DenseSymMatrix;
pub use partition::Partition;
pub use seed::Seed;

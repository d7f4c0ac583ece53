//! Symmetric eigen-decomposition, the SCORE embedding and k-means.

pub mod eigen;
pub mod kmeans;
pub mod score;

pub use eigen::{
    dense_top_k, krylov_top_k, spectral_norm, top_k_eigenpairs, top_k_eigenpairs_with, EigenMethod, EigenPairs,
    KrylovOptions, SparseSymMatrix, SymOperator, DENSE_MAX_N,
};
pub use kmeans::{kmeans, kmeans_warm, wcss, KMeansOptions, KMeansResult};
pub use score::{score, score_embedding, score_from, Clip, ScoreEmbedding, ScoreOptions, ScoreOutput};

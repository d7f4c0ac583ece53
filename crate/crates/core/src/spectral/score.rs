//! SCORE: k-means on entry-wise ratios of the leading eigenvectors.

use nalgebra::DMatrix;

use super::eigen::{top_k_eigenpairs_with, EigenMethod, EigenPairs};
use super::kmeans::{kmeans, kmeans_warm, KMeansOptions};
use crate::error::{Error, Result};
use crate::matrix::DenseSymMatrix;
use crate::partition::Partition;
use crate::seed::Seed;

/// Ratio clipping policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Clip {
    /// Clip at `ln(n)`.
    #[default]
    LogN,
    Fixed(f64),
    Disabled,
}

impl Clip {
    /// The threshold for an `n`-node embedding, if clipping is active.
    pub fn threshold(self, n: usize) -> Option<f64> {
        match self {
            Clip::LogN => Some((n as f64).ln()),
            Clip::Fixed(t) => Some(t),
            Clip::Disabled => None,
        }
    }
}

/// Rows of `[xi_2 / xi_1, ..., xi_K / xi_1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEmbedding {
    /// `n x (K-1)`.
    pub ratios: DMatrix<f64>,
    pub clip_threshold: Option<f64>,
    /// Nodes whose leading-eigenvector entry was exactly zero.
    pub degenerate: Vec<usize>,
}

/// Builds the ratio matrix from `pairs` (K >= 2), clipping entries to
/// `[-t, t]` when a threshold is given.
///
/// A node with `xi_1(i) == 0` gets its whole row set to the boundary
/// `sign(xi_k(i)) * t`; when clipping is disabled, `t = ln(n)` is used for
/// such rows only.
pub fn score_embedding(pairs: &EigenPairs, clip: Clip) -> Result<ScoreEmbedding> {
    let k = pairs.k();
    if k < 2 {
        return Err(Error::config("SCORE embedding needs at least two eigenvectors"));
    }
    let n = pairs.vectors.nrows();
    let t = clip.threshold(n);
    if let Some(t) = t {
        if !(t > 0.0) {
            return Err(Error::domain(format!("clip threshold {t} must be positive")));
        }
    }
    let boundary = t.unwrap_or_else(|| (n as f64).ln().max(1.0));
    let lead = pairs.vector(0);
    let mut ratios = DMatrix::zeros(n, k - 1);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let denom = lead[i];
        if denom == 0.0 {
            degenerate.push(i);
            for c in 1..k {
                let num = pairs.vectors[(i, c)];
                ratios[(i, c - 1)] = if num < 0.0 { -boundary } else { boundary };
            }
            continue;
        }
        for c in 1..k {
            let r = pairs.vectors[(i, c)] / denom;
            ratios[(i, c - 1)] = match t {
                Some(t) => r.clamp(-t, t),
                None => r,
            };
        }
    }
    if !degenerate.is_empty() {
        log::warn!(
            "{} node(s) have a zero leading-eigenvector entry; rows set to the clip boundary",
            degenerate.len()
        );
    }
    Ok(ScoreEmbedding {
        ratios,
        clip_threshold: t,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreOptions {
    pub clip: Clip,
    pub kmeans: KMeansOptions,
    pub eigen: EigenMethod,
}

#[derive(Debug, Clone)]
pub struct ScoreOutput {
    pub partition: Partition,
    pub eigen: EigenPairs,
    pub objective: f64,
}

/// Runs eigen-decomposition, ratio embedding and k-means on `m`.
///
/// With `k == 1` every node gets the single label.
pub fn score(m: &DenseSymMatrix, k: usize, opts: &ScoreOptions, seed: Seed) -> Result<ScoreOutput> {
    score_from(m, k, opts, seed, None)
}

/// [`score`] whose k-means also tries a run started from `init`.
pub fn score_from(
    m: &DenseSymMatrix,
    k: usize,
    opts: &ScoreOptions,
    seed: Seed,
    init: Option<&Partition>,
) -> Result<ScoreOutput> {
    let eigen = top_k_eigenpairs_with(m, k, opts.eigen)?;
    if k == 1 {
        return Ok(ScoreOutput {
            partition: Partition::new(vec![0; m.n()], 1)?,
            eigen,
            objective: 0.0,
        });
    }
    let emb = score_embedding(&eigen, opts.clip)?;
    let km = match init {
        Some(p) if p.k() == k => kmeans_warm(&emb.ratios, k, &opts.kmeans, seed, p.labels())?,
        _ => kmeans(&emb.ratios, k, &opts.kmeans, seed)?,
    };
    Ok(ScoreOutput {
        partition: km.partition,
        eigen,
        objective: km.objective,
    })
}

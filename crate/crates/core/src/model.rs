//! The logit-DCBM: parameters, mean matrices and sampling.
//!
//! For degree parameters `theta`, labels `pi` and a mixing matrix `P` with
//! unit diagonal, the linear mean is `tilde_ij = theta_i theta_j P[pi_i, pi_j]`
//! (rank K), the nonlinear factor is `N_ij = 1 / (1 + tilde_ij)` and edges
//! are drawn with probability `omega_ij = N_ij tilde_ij`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Pareto, Uniform};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::matrix::DenseSymMatrix;
use crate::partition::Partition;
use crate::seed::Rng;

/// Tolerance used when validating the mixing matrix.
const P_TOL: f64 = 1e-12;

/// Ground-truth generative parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    theta: Vec<f64>,
    partition: Partition,
    p: DMatrix<f64>,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, partition: Partition, p: DMatrix<f64>) -> Result<Self> {
        let n = partition.n();
        let k = partition.k();
        if theta.len() != n {
            return Err(Error::config(format!(
                "theta has length {}, partition has {n} nodes",
                theta.len()
            )));
        }
        if let Some((i, t)) = theta.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::domain(format!("theta[{i}] = {t} is not positive")));
        }
        validate_mixing(&p, k)?;
        if let Some(c) = partition.sizes().iter().position(|&s| s == 0) {
            return Err(Error::config(format!("community {} is empty", c + 1)));
        }
        Ok(ModelParams {
            theta,
            partition,
            p,
        })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `P[pi_i, pi_j]`.
    #[inline]
    pub fn affinity(&self, i: usize, j: usize) -> f64 {
        self.p[(self.partition.label(i), self.partition.label(j))]
    }
}

/// Checks that `p` is `k x k`, symmetric, non-negative with unit diagonal.
pub fn validate_mixing(p: &DMatrix<f64>, k: usize) -> Result<()> {
    if p.nrows() != k || p.ncols() != k {
        return Err(Error::config(format!(
            "mixing matrix is {}x{}, expected {k}x{k}",
            p.nrows(),
            p.ncols()
        )));
    }
    for a in 0..k {
        if (p[(a, a)] - 1.0).abs() > P_TOL {
            return Err(Error::domain(format!(
                "mixing matrix diagonal P[{a},{a}] = {} must be 1",
                p[(a, a)]
            )));
        }
        for b in 0..k {
            let v = p[(a, b)];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("mixing entry P[{a},{b}] = {v} is negative")));
            }
            if (v - p[(b, a)]).abs() > P_TOL {
                return Err(Error::domain("mixing matrix is not symmetric"));
            }
        }
    }
    Ok(())
}

/// `beta 11' + (1 - beta) I`.
pub fn uniform_offdiag_mixing(k: usize, beta: f64) -> Result<DMatrix<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::domain(format!("beta = {beta} must be non-negative")));
    }
    Ok(DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { beta }))
}

/// Two-block form `[P1 P2; P2 P1]` with `P1 = 0.5 b1 11' + (1 - 0.5 b1) I`
/// and `P2 = 0.5 (b1 + b2) 11'`, each block `k/2 x k/2`.
pub fn two_block_mixing(k: usize, beta1: f64, beta2: f64) -> Result<DMatrix<f64>> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::config(format!("two-block mixing needs even k, got {k}")));
    }
    if !(beta1 >= 0.0 && beta2 >= 0.0) {
        return Err(Error::domain("beta1 and beta2 must be non-negative"));
    }
    let half = k / 2;
    let within = 0.5 * beta1;
    let across = 0.5 * (beta1 + beta2);
    Ok(DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            1.0
        } else if (a < half) == (b < half) {
            within
        } else {
            across
        }
    }))
}

/// Distribution of the raw degree draws before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaDistribution {
    Uniform { lo: f64, hi: f64 },
    /// Draws above `truncation` are replaced by `truncation`.
    Pareto { scale: f64, shape: f64, truncation: f64 },
}

/// How degree parameters are generated: raw i.i.d. draws rescaled so that
/// `||theta||_2 = b_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSpec {
    pub distribution: ThetaDistribution,
    pub b_n: f64,
}

impl ThetaSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} = {v} must be positive")))
            }
        };
        pos("b_n", self.b_n)?;
        match self.distribution {
            ThetaDistribution::Uniform { lo, hi } => {
                pos("lo", lo)?;
                pos("hi", hi)?;
                if lo > hi {
                    return Err(Error::domain(format!("uniform bounds lo={lo} > hi={hi}")));
                }
            }
            ThetaDistribution::Pareto {
                scale,
                shape,
                truncation,
            } => {
                pos("scale", scale)?;
                pos("shape", shape)?;
                pos("truncation", truncation)?;
            }
        }
        Ok(())
    }

    /// Raw draws before normalization.
    pub fn draw_raw(&self, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self.distribution {
            ThetaDistribution::Uniform { lo, hi } if lo == hi => vec![lo; n],
            ThetaDistribution::Uniform { lo, hi } => {
                let d = Uniform::new(lo, hi).map_err(|e| Error::domain(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            ThetaDistribution::Pareto {
                scale,
                shape,
                truncation,
            } => {
                let d = Pareto::new(scale, shape).map_err(|e| Error::domain(e.to_string()))?;
                (0..n).map(|_| d.sample(rng).min(truncation)).collect()
            }
        })
    }
}

/// Sizes of `k` near-equal communities summing to `n` (larger ones first).
pub fn balanced_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Block partition with `sizes[c]` nodes in community `c`, optionally with
/// node order shuffled.
pub fn gen_partition(n: usize, sizes: &[usize], shuffle: bool, rng: &mut Rng) -> Result<Partition> {
    if sizes.is_empty() {
        return Err(Error::config("no community sizes given"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::config("community sizes must be at least 1"));
    }
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::config(format!("community sizes sum to {total}, expected n={n}")));
    }
    let blocks = Partition::blocks(sizes);
    if !shuffle {
        return Ok(blocks);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(blocks.reordered(&order))
}

/// Draws `n` degree parameters and rescales them to Euclidean norm `b_n`.
pub fn gen_theta(spec: &ThetaSpec, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let raw = spec.draw_raw(n, rng)?;
    let norm = raw.iter().map(|t| t * t).sum::<f64>().sqrt();
    Ok(raw.into_iter().map(|t| spec.b_n * t / norm).collect())
}

/// The rank-K linear mean `Theta Pi P Pi' Theta`, diagonal included.
pub fn build_tilde_omega(params: &ModelParams) -> DenseSymMatrix {
    let theta = params.theta();
    DenseSymMatrix::from_upper_fn(params.n(), |i, j| theta[i] * theta[j] * params.affinity(i, j))
}

/// Applies the logit link entry-wise, returning `(omega, nfactor)` with
/// `nfactor = 1 / (1 + tilde)` and `omega = tilde / (1 + tilde)`.
pub fn logit_link(tilde: &DenseSymMatrix) -> Result<(DenseSymMatrix, DenseSymMatrix)> {
    if let Some(v) = tilde.as_matrix().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::domain(format!("negative mean entry {v}")));
    }
    let nfactor = tilde.map(|t| 1.0 / (1.0 + t));
    let omega = tilde.map(|t| t / (1.0 + t));
    Ok((omega, nfactor))
}

/// Samples the upper triangle independently with probabilities `omega_ij`
/// and mirrors it. The diagonal of `omega` is ignored.
pub fn sample_adjacency(omega: &DenseSymMatrix, rng: &mut Rng) -> Result<AdjacencyMatrix> {
    let n = omega.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = omega.get(i, j);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("probability {p} at ({i},{j}) outside [0,1]")));
            }
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    AdjacencyMatrix::from_edges(n, edges)
}

/// Eigenvalue of `p` with the smallest magnitude.
pub fn lambda_min_abs(p: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(p.clone());
    eig.eigenvalues
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0)
}

/// Calibrated signal-to-noise ratio `b_n |lambda_min(P)|`.
pub fn snr(b_n: f64, p: &DMatrix<f64>) -> f64 {
    b_n * lambda_min_abs(p).abs()
}

/// The mean matrices of one parameter set.
#[derive(Debug, Clone)]
pub struct ModelMeans {
    pub tilde: DenseSymMatrix,
    pub omega: DenseSymMatrix,
    pub nfactor: DenseSymMatrix,
}

impl ModelMeans {
    pub fn new(params: &ModelParams) -> Self {
        let tilde = build_tilde_omega(params);
        let (omega, nfactor) = logit_link(&tilde).expect("tilde is non-negative by construction");
        ModelMeans {
            tilde,
            omega,
            nfactor,
        }
    }
}

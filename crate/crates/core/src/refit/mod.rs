//! Refitting the logit-DCBM given a partition.
//!
//! Every estimator here is a ratio of two sums whose expectations share the
//! same nonlinear factors `N_ij`, which cancel. Substituting the mean matrix
//! for the data therefore recovers the parameters exactly, which is how the
//! tests check them.

mod cycles;

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use cycles::{cycle_counts_m3, enumerate_counts, CycleCounts};
use cycles::{community_counts_m3, weighted_counts_m3, weighted_counts_m5, CommunityWeights};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, EdgeWeights};
use crate::matrix::{read_matrix_csv, write_matrix_csv, DenseSymMatrix};
use crate::partition::Partition;

/// Ratio `sum a_ij / sum row_i col_j (1 - a_ij)` over every entry of a
/// (possibly rectangular) matrix with known row and column weights.
pub fn estimate_x0(a: &DMatrix<f64>, row_theta: &[f64], col_theta: &[f64]) -> Result<f64> {
    if a.nrows() != row_theta.len() || a.ncols() != col_theta.len() {
        return Err(Error::config(format!(
            "matrix is {}x{} but weights have lengths {} and {}",
            a.nrows(),
            a.ncols(),
            row_theta.len(),
            col_theta.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &tj) in col_theta.iter().enumerate() {
        for (i, &ti) in row_theta.iter().enumerate() {
            let v = a[(i, j)];
            num += v;
            den += ti * tj * (1.0 - v);
        }
    }
    if !(den > 0.0) {
        return Err(Error::Estimation {
            message: "x0 denominator is zero".into(),
            numerator: num,
            denominator: den,
        });
    }
    Ok(num / den)
}

/// What to use for a node whose denominator count is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThetaFallback {
    /// Mean of the successful estimates in the node's community, or of all
    /// successful estimates when the community has none.
    #[default]
    CommunityMean,
    Value(f64),
}

/// Per-node degree estimates with the counts behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: Vec<f64>,
    pub counts: Vec<CycleCounts>,
    /// Nodes whose estimate came from the fallback.
    pub imputed: Vec<usize>,
}

fn check_sizes(part: &Partition, n: usize, min: usize) -> Result<Vec<Vec<usize>>> {
    if part.n() != n {
        return Err(Error::config(format!(
            "partition covers {} nodes, network has {n}",
            part.n()
        )));
    }
    let comms = part.communities();
    for (c, members) in comms.iter().enumerate() {
        if members.len() < min {
            return Err(Error::CommunityTooSmall {
                community: c + 1,
                size: members.len(),
                required: min,
            });
        }
    }
    Ok(comms)
}

fn finish_theta(counts: Vec<CycleCounts>, part: &Partition, fallback: ThetaFallback) -> ThetaFit {
    let n = counts.len();
    let mut theta = vec![0.0; n];
    let mut ok = vec![false; n];
    for (i, c) in counts.iter().enumerate() {
        if let Some(r) = c.ratio() {
            theta[i] = r.sqrt();
            ok[i] = true;
        }
    }
    let imputed: Vec<usize> = (0..n).filter(|&i| !ok[i]).collect();
    if !imputed.is_empty() {
        let value = |i: usize| -> f64 {
            match fallback {
                ThetaFallback::Value(v) => v,
                ThetaFallback::CommunityMean => {
                    let mean = |sel: &dyn Fn(usize) -> bool| {
                        let (s, c) = (0..n)
                            .filter(|&j| ok[j] && sel(j))
                            .fold((0.0, 0usize), |(s, c), j| (s + theta[j], c + 1));
                        (c > 0).then(|| s / c as f64)
                    };
                    let k = part.label(i);
                    mean(&|j| part.label(j) == k).or_else(|| mean(&|_| true)).unwrap_or(0.0)
                }
            }
        };
        let fills: Vec<(usize, f64)> = imputed.iter().map(|&i| (i, value(i))).collect();
        for (i, v) in fills {
            theta[i] = v;
        }
        log::warn!(
            "{} node(s) had an empty denominator cycle count; theta imputed",
            imputed.len()
        );
    }
    ThetaFit {
        theta,
        counts,
        imputed,
    }
}

/// Degree estimates from three-cycle ratios within each estimated community:
/// `theta_i = sqrt(phi1 / phi2)` with `S = C_k \ {i}`.
pub fn estimate_theta(a: &AdjacencyMatrix, part: &Partition, fallback: ThetaFallback) -> Result<ThetaFit> {
    let comms = check_sizes(part, a.n(), 3)?;
    let mut counts = vec![CycleCounts::default(); a.n()];
    for members in &comms {
        for (&i, c) in members.iter().zip(community_counts_m3(a, members)) {
            counts[i] = c;
        }
    }
    Ok(finish_theta(counts, part, fallback))
}

/// Degree estimates from alternating `m`-cycle ratios for any odd `m >= 3`
/// on arbitrary edge weights (data or population means).
///
/// `m = 3` and `m = 5` use closed forms; larger `m` enumerates cycles
/// directly and is only practical for small communities.
pub fn estimate_theta_general_m(
    w: &impl EdgeWeights,
    part: &Partition,
    m: usize,
    fallback: ThetaFallback,
) -> Result<ThetaFit> {
    if m < 3 || m % 2 == 0 {
        return Err(Error::config(format!("cycle length m={m} must be odd and >= 3")));
    }
    let comms = check_sizes(part, w.order(), m)?;
    let mut counts = vec![CycleCounts::default(); w.order()];
    for members in &comms {
        let local: Vec<CycleCounts> = match m {
            3 => weighted_counts_m3(&CommunityWeights::new(w, members)),
            5 => weighted_counts_m5(&CommunityWeights::new(w, members)),
            _ => members
                .par_iter()
                .map(|&i| {
                    let others: Vec<usize> = members.iter().copied().filter(|&j| j != i).collect();
                    enumerate_counts(w, i, &others, m)
                })
                .collect(),
        };
        for (&i, c) in members.iter().zip(local) {
            counts[i] = c;
        }
    }
    Ok(finish_theta(counts, part, fallback))
}

/// Block-level mixing estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PFit {
    /// Symmetrized, unit diagonal.
    pub p_hat: DMatrix<f64>,
    /// The raw block ratios including the diagonal blocks (`i != j`), for
    /// diagnostics. `NaN` where the denominator vanished.
    pub raw: DMatrix<f64>,
    /// Off-diagonal pairs `(k, l)`, `k < l`, whose denominator was zero.
    pub zero_denominators: Vec<(usize, usize)>,
}

/// `P_kl = sum_{C_k x C_l} a_ij / sum theta_i theta_j (1 - a_ij)`, diagonal
/// forced to one.
pub fn estimate_p(w: &impl EdgeWeights, part: &Partition, theta_hat: &[f64]) -> Result<PFit> {
    let n = w.order();
    if part.n() != n || theta_hat.len() != n {
        return Err(Error::config("partition, theta and network sizes differ"));
    }
    if let Some(c) = part.sizes().iter().position(|&s| s == 0) {
        return Err(Error::CommunityTooSmall {
            community: c + 1,
            size: 0,
            required: 1,
        });
    }
    let k = part.k();
    let zero = || (DMatrix::<f64>::zeros(k, k), DMatrix::<f64>::zeros(k, k));
    let (num, den) = (0..n)
        .into_par_iter()
        .fold(zero, |(mut num, mut den), i| {
            let ki = part.label(i);
            for j in (i + 1)..n {
                let kj = part.label(j);
                let v = w.weight(i, j);
                let d = theta_hat[i] * theta_hat[j] * (1.0 - v);
                num[(ki, kj)] += v;
                den[(ki, kj)] += d;
                if ki != kj {
                    num[(kj, ki)] += v;
                    den[(kj, ki)] += d;
                }
            }
            (num, den)
        })
        .reduce(zero, |(a, b), (c, d)| (a + c, b + d));

    let mut raw = DMatrix::from_element(k, k, f64::NAN);
    for a in 0..k {
        for b in 0..k {
            if den[(a, b)] > 0.0 {
                raw[(a, b)] = num[(a, b)] / den[(a, b)];
            }
        }
    }
    let mut p_hat = DMatrix::from_element(k, k, 1.0);
    let mut zero_denominators = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let (x, y) = (raw[(a, b)], raw[(b, a)]);
            let v = if x.is_nan() || y.is_nan() {
                zero_denominators.push((a, b));
                0.0
            } else {
                0.5 * (x + y)
            };
            p_hat[(a, b)] = v;
            p_hat[(b, a)] = v;
        }
    }
    if !zero_denominators.is_empty() {
        log::warn!("P estimate: zero denominator for block pairs {zero_denominators:?}; set to 0");
    }
    Ok(PFit {
        p_hat,
        raw,
        zero_denominators,
    })
}

/// `N_ij = 1 / (1 + theta_i theta_j P[k_i, k_j])`. Negative mixing entries
/// are clamped to zero first.
pub fn assemble_n(theta_hat: &[f64], p_hat: &DMatrix<f64>, part: &Partition) -> Result<DenseSymMatrix> {
    let n = part.n();
    if theta_hat.len() != n || p_hat.nrows() != part.k() || p_hat.ncols() != part.k() {
        return Err(Error::config("theta, mixing matrix and partition sizes differ"));
    }
    if let Some(t) = theta_hat.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::domain(format!("negative theta estimate {t}")));
    }
    let mut p = p_hat.clone();
    let negatives = p.iter().filter(|v| **v < 0.0).count();
    if negatives > 0 {
        log::warn!("clamping {negatives} negative mixing entries to 0");
        p.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(DenseSymMatrix::from_upper_fn(n, |i, j| {
        1.0 / (1.0 + theta_hat[i] * theta_hat[j] * p[(part.label(i), part.label(j))])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefitOptions {
    /// Odd cycle length used for the degree estimates.
    pub cycle_length: usize,
    pub fallback: ThetaFallback,
}

impl Default for RefitOptions {
    fn default() -> Self {
        RefitOptions {
            cycle_length: 3,
            fallback: ThetaFallback::CommunityMean,
        }
    }
}

/// Output of one refitting pass. The dense factor matrix is rebuilt on
/// demand by [`n_hat`](Self::n_hat) rather than stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FitBundle {
    pub theta_hat: Vec<f64>,
    pub p_hat: DMatrix<f64>,
    pub partition: Partition,
    pub imputed: Vec<usize>,
}

/// Estimates degrees, the mixing matrix and the nonlinear factor matrix
/// from `a` under the partition `part`.
pub fn refit(a: &AdjacencyMatrix, part: &Partition, opts: &RefitOptions) -> Result<FitBundle> {
    let fit = if opts.cycle_length == 3 {
        estimate_theta(a, part, opts.fallback)?
    } else {
        estimate_theta_general_m(a, part, opts.cycle_length, opts.fallback)?
    };
    if let ThetaFallback::Value(v) = opts.fallback {
        if !(v >= 0.0) {
            return Err(Error::config(format!("theta fallback {v} must be non-negative")));
        }
    }
    let p = estimate_p(a, part, &fit.theta)?;
    Ok(FitBundle {
        theta_hat: fit.theta,
        p_hat: p.p_hat,
        partition: part.clone(),
        imputed: fit.imputed,
    })
}

impl FitBundle {
    pub fn n_hat(&self) -> Result<DenseSymMatrix> {
        assemble_n(&self.theta_hat, &self.p_hat, &self.partition)
    }

    pub fn theta_mean(&self) -> f64 {
        self.theta_hat.iter().sum::<f64>() / self.theta_hat.len() as f64
    }

    /// Mean of the off-diagonal mixing entries; `NaN` when `K = 1`.
    pub fn p_offdiag_mean(&self) -> f64 {
        let k = self.p_hat.nrows();
        let mut s = 0.0;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    s += self.p_hat[(a, b)];
                }
            }
        }
        s / (k * (k.max(1) - 1)) as f64
    }

    /// Writes `theta_hat.csv`, `P_hat.csv` and `partition.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let theta_path = dir.join("theta_hat.csv");
        let text: String = self.theta_hat.iter().map(|t| format!("{t}\n")).collect();
        std::fs::write(&theta_path, text).map_err(|e| Error::io(&theta_path, e))?;
        let p_path = dir.join("P_hat.csv");
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &self.p_hat).map_err(|e| Error::io(&p_path, e))?;
        std::fs::write(&p_path, buf).map_err(|e| Error::io(&p_path, e))?;
        self.partition.save(&dir.join("partition.txt"))
    }

    /// Reads a bundle written by [`save`](Self::save).
    pub fn load(dir: &Path) -> Result<Self> {
        let theta = read_matrix_csv(&dir.join("theta_hat.csv"))?;
        let theta_hat: Vec<f64> = theta.iter().copied().collect();
        let p_hat = read_matrix_csv(&dir.join("P_hat.csv"))?;
        let partition = Partition::load(&dir.join("partition.txt"), Some(p_hat.nrows()))?;
        if theta_hat.len() != partition.n() {
            return Err(Error::config(format!(
                "{} degree estimates for {} nodes in {}",
                theta_hat.len(),
                partition.n(),
                dir.display()
            )));
        }
        Ok(FitBundle {
            theta_hat,
            p_hat,
            partition,
            imputed: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_offdiag_mixing, ModelMeans, ModelParams};

    #[test]
    fn x0_population_and_zero() {
        let rows = [0.5, 0.9, 1.3];
        let cols = [0.2, 0.7, 1.1, 0.4];
        let x0 = 2.0;
        let omega = DMatrix::from_fn(3, 4, |i, j| {
            let t = x0 * rows[i] * cols[j];
            t / (1.0 + t)
        });
        assert!((estimate_x0(&omega, &rows, &cols).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(estimate_x0(&DMatrix::zeros(3, 4), &rows, &cols).unwrap(), 0.0);
        let err = estimate_x0(&DMatrix::from_element(3, 4, 1.0), &rows, &cols).unwrap_err();
        assert!(matches!(err, Error::Estimation { numerator, .. } if numerator == 12.0));
    }

    fn small_params() -> ModelParams {
        let theta: Vec<f64> = (0..24).map(|i| 0.3 + 0.05 * (i % 7) as f64).collect();
        let part = Partition::blocks(&[8, 8, 8]);
        ModelParams::new(theta, part, uniform_offdiag_mixing(3, 0.4).unwrap()).unwrap()
    }

    #[test]
    fn population_exact_m3_m5_m7() {
        let params = small_params();
        let means = ModelMeans::new(&params);
        for m in [3, 5, 7] {
            let fit = estimate_theta_general_m(&means.omega, params.partition(), m, ThetaFallback::default()).unwrap();
            for (a, b) in fit.theta.iter().zip(params.theta()) {
                assert!((a - b).abs() < 1e-10, "m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn population_p_exact() {
        let params = small_params();
        let means = ModelMeans::new(&params);
        let p = estimate_p(&means.omega, params.partition(), params.theta()).unwrap();
        assert!((&p.p_hat - params.mixing()).amax() < 1e-12);
        // Diagonal blocks satisfy the same identity.
        for k in 0..3 {
            assert!((p.raw[(k, k)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mislabeled_node_ratio() {
        // Node 0 truly in community 1 (0-based 0) but assigned to community 2.
        let params = small_params();
        let means = ModelMeans::new(&params);
        let mut labels = params.partition().labels().to_vec();
        labels[0] = 1;
        let est = Partition::new(labels, 3).unwrap();
        let fit = estimate_theta_general_m(&means.omega, &est, 3, ThetaFallback::default()).unwrap();
        let expect = params.mixing()[(1, 0)] * params.theta()[0];
        assert!((fit.theta[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn theta_requires_three_members() {
        let a = AdjacencyMatrix::from_edges(5, [(0, 1)]).unwrap();
        let part = Partition::new(vec![0, 0, 0, 1, 1], 2).unwrap();
        let err = estimate_theta(&a, &part, ThetaFallback::default()).unwrap_err();
        assert!(matches!(err, Error::CommunityTooSmall { community: 2, size: 2, required: 3 }));
        assert!(estimate_theta_general_m(&a, &part, 4, ThetaFallback::default()).is_err());
    }

    #[test]
    fn fallback_imputation() {
        // Star on 0..4 plus a triangle 4,5,6 (all within one community).
        let a = AdjacencyMatrix::from_edges(7, [(0, 1), (0, 2), (0, 3), (4, 5), (5, 6), (4, 6)]).unwrap();
        let part = Partition::new(vec![0; 7], 1).unwrap();
        let fit = estimate_theta(&a, &part, ThetaFallback::Value(0.25)).unwrap();
        // Node 0: three non-adjacent neighbors -> phi1 = 6; phi2 counts the
        // triangle edges among non-neighbors 4,5,6 -> 6.
        assert_eq!(fit.counts[0], CycleCounts { phi1: 6.0, phi2: 6.0 });
        assert_eq!(fit.theta[0], 1.0);
        for &i in &fit.imputed {
            assert_eq!(fit.theta[i], 0.25);
            assert_eq!(fit.counts[i].phi2, 0.0);
        }
        let mean_fit = estimate_theta(&a, &part, ThetaFallback::CommunityMean).unwrap();
        let ok: Vec<f64> = (0..7).filter(|i| !mean_fit.imputed.contains(i)).map(|i| mean_fit.theta[i]).collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        for &i in &mean_fit.imputed {
            assert_eq!(mean_fit.theta[i], mean);
        }
    }

    #[test]
    fn p_zero_between_disconnected_blocks() {
        let a = AdjacencyMatrix::from_edges(6, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let part = Partition::blocks(&[3, 3]);
        let p = estimate_p(&a, &part, &[1.0; 6]).unwrap();
        assert_eq!(p.p_hat[(0, 1)], 0.0);
        assert_eq!(p.p_hat[(0, 0)], 1.0);
        assert!(p.zero_denominators.is_empty());
    }

    #[test]
    fn assemble_cases() {
        let part = Partition::blocks(&[2, 2]);
        let p = uniform_offdiag_mixing(2, 1.0).unwrap();
        let ones = assemble_n(&[0.0; 4], &p, &part).unwrap();
        assert!(ones.as_matrix().iter().all(|&v| v == 1.0));
        let half = assemble_n(&[1.0; 4], &p, &part).unwrap();
        assert_eq!(half.get(0, 3), 0.5);
        let mut neg = p.clone();
        neg[(0, 1)] = -0.3;
        neg[(1, 0)] = -0.3;
        let clamped = assemble_n(&[1.0; 4], &neg, &part).unwrap();
        assert_eq!(clamped.get(0, 3), 1.0);
    }

    #[test]
    fn assemble_exact_inputs_reproduce_n() {
        let params = small_params();
        let means = ModelMeans::new(&params);
        let n_hat = assemble_n(params.theta(), params.mixing(), params.partition()).unwrap();
        assert!((n_hat.as_matrix() - means.nfactor.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn bundle_round_trip() {
        let params = small_params();
        let means = ModelMeans::new(&params);
        let a = crate::model::sample_adjacency(&means.omega, &mut crate::seed::Seed::new(3).rng()).unwrap();
        let bundle = refit(&a, params.partition(), &RefitOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = FitBundle::load(dir.path()).unwrap();
        assert_eq!(back.theta_hat, bundle.theta_hat);
        assert_eq!(back.p_hat, bundle.p_hat);
        assert_eq!(back.n_hat().unwrap(), bundle.n_hat().unwrap());
        assert_eq!(back.partition, bundle.partition);
    }
}

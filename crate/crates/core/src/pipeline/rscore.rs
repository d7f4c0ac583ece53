//! The recursive refit-and-recluster loop.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::matrix::DenseSymMatrix;
use crate::partition::Partition;
use crate::refit::{refit, FitBundle, RefitOptions};
use crate::seed::{stage, Seed};
use crate::spectral::{score, score_from, ScoreOptions};

use super::hamming::hamming_error;

#[derive(Debug, Clone, PartialEq)]
pub struct RScoreConfig {
    /// Number of refitting passes after the initial SCORE; 0 means plain SCORE.
    pub iterations: usize,
    pub k: usize,
    pub score: ScoreOptions,
    pub refit: RefitOptions,
    pub seed: Seed,
    /// Stop as soon as a pass reproduces the previous partition.
    pub early_stop: bool,
    /// Also start k-means from the previous partition at each pass.
    pub warm_start: bool,
}

impl RScoreConfig {
    pub fn new(k: usize) -> Self {
        RScoreConfig {
            iterations: 10,
            k,
            score: ScoreOptions::default(),
            refit: RefitOptions::default(),
            seed: Seed::new(0),
            early_stop: true,
            warm_start: false,
        }
    }

    /// Clustering seed of pass `m`. Pass 0 uses the master seed itself.
    pub fn iteration_seed(&self, m: usize) -> Seed {
        if m == 0 {
            self.seed
        } else {
            self.seed.path(&[stage::CLUSTERING, m as u64])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub partition: Partition,
    /// Refit that produced the matrix clustered at this pass; `None` at 0.
    pub fit: Option<FitBundle>,
    pub hamming: Option<f64>,
    /// Leading eigenvalues of the clustered matrix, by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// All requested passes ran.
    Completed,
    /// A pass reproduced the previous partition.
    Converged,
    /// Refitting or reclustering failed at the given pass.
    Failed { iteration: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RScoreTrace {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
}

pub const TRACE_HEADER: &str = "iteration,hamming_error,lambda1,lambdaK,theta_hat_mean,P_offdiag_mean";

fn field(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl RScoreTrace {
    pub fn final_partition(&self) -> &Partition {
        &self.records.last().expect("trace has the initial pass").partition
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration,
                field(r.hamming),
                field(r.eigenvalues.first().copied()),
                field(r.eigenvalues.last().copied()),
                field(r.fit.as_ref().map(FitBundle::theta_mean)),
                field(r.fit.as_ref().map(FitBundle::p_offdiag_mean)),
            )?;
        }
        Ok(())
    }
}

/// `A_ij / N_ij` off the diagonal, zero on it.
pub fn renormalize(a: &AdjacencyMatrix, n_hat: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    if a.n() != n_hat.n() {
        return Err(Error::config(format!(
            "network has {} nodes, factor matrix is {}x{}",
            a.n(),
            n_hat.n(),
            n_hat.n()
        )));
    }
    let mut m = DenseSymMatrix::zeros(a.n()).into_matrix();
    for (i, j) in a.edges() {
        let v = 1.0 / n_hat.get(i, j);
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    DenseSymMatrix::new(m)
}

/// SCORE on the network reweighted by a known factor matrix.
pub fn oracle_score(
    a: &AdjacencyMatrix,
    nfactor: &DenseSymMatrix,
    k: usize,
    opts: &ScoreOptions,
    seed: Seed,
) -> Result<Partition> {
    Ok(score(&renormalize(a, nfactor)?, k, opts, seed)?.partition)
}

/// Runs SCORE on `a`, then alternates refitting and SCORE on `A / N_hat`.
/// Errors at the initial pass propagate; a failure at a later pass ends the
/// loop with the last good partition.
pub fn r_score(a: &AdjacencyMatrix, cfg: &RScoreConfig, truth: Option<&Partition>) -> Result<(Partition, RScoreTrace)> {
    let n = a.n();
    if cfg.k < 2 || n < 3 * cfg.k {
        return Err(Error::config(format!("R-SCORE needs K >= 2 and n >= 3K, got K={}, n={n}", cfg.k)));
    }
    if let Some(t) = truth {
        if t.n() != n {
            return Err(Error::config(format!("truth covers {} nodes, network has {n}", t.n())));
        }
    }
    let score_hamming = |p: &Partition| truth.map(|t| hamming_error(p, t)).transpose();

    let init = score(&a.to_dense(), cfg.k, &cfg.score, cfg.iteration_seed(0))?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        hamming: score_hamming(&init.partition)?,
        partition: init.partition,
        fit: None,
        eigenvalues: init.eigen.values,
    }];
    let mut stop = StopReason::Completed;
    for m in 1..=cfg.iterations {
        let prev = &records[m - 1].partition;
        let step = || -> Result<(FitBundle, crate::spectral::ScoreOutput)> {
            let fit = refit(a, prev, &cfg.refit)?;
            let reweighted = renormalize(a, &fit.n_hat()?)?;
            let warm = cfg.warm_start.then_some(prev);
            let out = score_from(&reweighted, cfg.k, &cfg.score, cfg.iteration_seed(m), warm)?;
            Ok((fit, out))
        };
        let (fit, out) = match step() {
            Ok(v) => v,
            Err(e) => {
                log::warn!("R-SCORE pass {m} failed, keeping pass {}: {e}", m - 1);
                stop = StopReason::Failed {
                    iteration: m,
                    message: e.to_string(),
                };
                break;
            }
        };
        let repeated = out.partition == *prev;
        records.push(IterationRecord {
            iteration: m,
            hamming: score_hamming(&out.partition)?,
            partition: out.partition,
            fit: Some(fit),
            eigenvalues: out.eigen.values,
        });
        if cfg.early_stop && repeated {
            stop = StopReason::Converged;
            break;
        }
    }
    let trace = RScoreTrace { records, stop };
    Ok((trace.final_partition().clone(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_adjacency, uniform_offdiag_mixing, ModelMeans, ModelParams};

    fn instance(seed: u64) -> (ModelParams, AdjacencyMatrix) {
        let n = 150;
        let theta: Vec<f64> = (0..n).map(|i| 0.4 + 0.6 * ((i * 37) % 11) as f64 / 10.0).collect();
        let part = Partition::blocks(&[50, 50, 50]);
        let params = ModelParams::new(theta, part, uniform_offdiag_mixing(3, 0.2).unwrap()).unwrap();
        let a = sample_adjacency(&ModelMeans::new(&params).omega, &mut Seed::new(seed).rng()).unwrap();
        (params, a)
    }

    fn fast(k: usize) -> RScoreConfig {
        let mut cfg = RScoreConfig::new(k);
        cfg.score.kmeans.restarts = 10;
        cfg
    }

    #[test]
    fn zero_iterations_is_score() {
        let (_, a) = instance(1);
        let mut cfg = fast(3);
        cfg.iterations = 0;
        cfg.seed = Seed::new(99);
        let (p, trace) = r_score(&a, &cfg, None).unwrap();
        let s = score(&a.to_dense(), 3, &cfg.score, Seed::new(99)).unwrap();
        assert_eq!(p, s.partition);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].eigenvalues, s.eigen.values);
    }

    #[test]
    fn trace_length_and_csv() {
        let (params, a) = instance(2);
        let mut cfg = fast(3);
        cfg.iterations = 4;
        cfg.early_stop = false;
        let (_, trace) = r_score(&a, &cfg, Some(params.partition())).unwrap();
        assert_eq!(trace.records.len(), 5);
        assert_eq!(trace.stop, StopReason::Completed);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 6);
        assert!(lines[1].ends_with(",NA,NA"));
        assert!(!lines[2].contains("NA"));
    }

    #[test]
    fn fixed_point_persists() {
        let (_, a) = instance(3);
        let mut cfg = fast(3);
        cfg.iterations = 10;
        let (_, trace) = r_score(&a, &cfg, None).unwrap();
        if trace.stop != StopReason::Converged {
            return;
        }
        let stopped = trace.records.len() - 1;
        cfg.early_stop = false;
        cfg.iterations = stopped + 2;
        let (_, full) = r_score(&a, &cfg, None).unwrap();
        for r in &full.records[stopped..] {
            assert_eq!(r.partition, trace.records[stopped].partition);
        }
    }

    #[test]
    fn refit_failure_keeps_last_partition() {
        // Two disjoint cliques of 4 plus isolated pairs: K=3 forces a tiny cluster.
        let mut edges = Vec::new();
        for block in [0usize, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((block + i, block + j));
                }
            }
        }
        edges.push((8, 9));
        let a = AdjacencyMatrix::from_edges(10, edges).unwrap();
        let mut cfg = fast(3);
        cfg.iterations = 3;
        let (p, trace) = r_score(&a, &cfg, None).unwrap();
        assert_eq!(p, trace.records.last().unwrap().partition);
        if let StopReason::Failed { iteration, .. } = trace.stop {
            assert_eq!(iteration, trace.records.len());
        }
    }

    #[test]
    fn rejects_small_inputs() {
        let a = AdjacencyMatrix::from_edges(5, [(0, 1)]).unwrap();
        assert!(matches!(r_score(&a, &fast(2), None), Err(Error::Config(_))));
        assert!(matches!(r_score(&a, &fast(1), None), Err(Error::Config(_))));
    }
}

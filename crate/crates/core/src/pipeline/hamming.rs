//! Misclustering rate minimized over label permutations.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Largest label count for which [`hamming_error`] enumerates permutations.
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// `C[a][b]` = number of nodes with estimated label `a` and true label `b`,
/// padded to a square of side `max(k_est, k_truth)`.
pub fn confusion(est: &Partition, truth: &Partition) -> Result<Vec<Vec<usize>>> {
    if est.n() != truth.n() {
        return Err(Error::config(format!(
            "partitions have different lengths {} and {}",
            est.n(),
            truth.n()
        )));
    }
    let k = est.k().max(truth.k());
    let mut c = vec![vec![0usize; k]; k];
    for (&a, &b) in est.labels().iter().zip(truth.labels()) {
        c[a][b] += 1;
    }
    Ok(c)
}

fn rate(n: usize, matched: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n - matched) as f64 / n as f64
    }
}

/// Fraction of misclustered nodes under the best matching of labels.
/// Enumerates permutations up to [`EXHAUSTIVE_MAX_K`] labels and solves the
/// assignment problem above that.
pub fn hamming_error(est: &Partition, truth: &Partition) -> Result<f64> {
    if est.k().max(truth.k()) <= EXHAUSTIVE_MAX_K {
        hamming_exhaustive(est, truth)
    } else {
        hamming_assignment(est, truth)
    }
}

/// Tries every permutation of the labels.
pub fn hamming_exhaustive(est: &Partition, truth: &Partition) -> Result<f64> {
    let c = confusion(est, truth)?;
    let k = c.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let m: usize = p.iter().enumerate().map(|(a, &b)| c[a][b]).sum();
        best = best.max(m);
    });
    Ok(rate(est.n(), best))
}

fn permute(p: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at + 1 >= p.len() {
        visit(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, visit);
        p.swap(at, i);
    }
}

/// Maximum-weight matching on the confusion matrix.
pub fn hamming_assignment(est: &Partition, truth: &Partition) -> Result<f64> {
    let c = confusion(est, truth)?;
    if c.is_empty() {
        return Ok(0.0);
    }
    let weights = Matrix::from_rows(c.iter().map(|row| row.iter().map(|&v| v as i64)))
        .expect("confusion matrix is square");
    let (matched, _) = kuhn_munkres(&weights);
    Ok(rate(est.n(), matched as usize))
}

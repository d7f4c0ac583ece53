#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng as _;
use rscore::model::ModelParams;
use rscore::seed::Rng;
use rscore::Partition;

/// Random community sizes, each at least `min`, summing to `n`.
pub fn random_sizes(n: usize, k: usize, min: usize, rng: &mut Rng) -> Vec<usize> {
    let mut sizes = vec![min; k];
    for _ in 0..(n - min * k) {
        sizes[rng.random_range(0..k)] += 1;
    }
    sizes
}

/// Symmetric, unit diagonal, off-diagonal entries in `[lo, hi)`.
pub fn random_mixing(k: usize, lo: f64, hi: f64, rng: &mut Rng) -> DMatrix<f64> {
    let mut p = DMatrix::from_element(k, k, 1.0);
    for a in 0..k {
        for b in (a + 1)..k {
            let v = rng.random_range(lo..hi);
            p[(a, b)] = v;
            p[(b, a)] = v;
        }
    }
    p
}

pub fn random_params(n: usize, k: usize, rng: &mut Rng) -> ModelParams {
    let sizes = random_sizes(n, k, 5, rng);
    let part = Partition::blocks(&sizes);
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.5)).collect();
    ModelParams::new(theta, part, random_mixing(k, 0.0, 0.9, rng)).unwrap()
}

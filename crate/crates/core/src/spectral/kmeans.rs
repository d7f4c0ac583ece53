//! Lloyd's k-means with greedy k-means++ seeding and restarts.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::seed::{Rng, Seed};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Lloyd stops once the objective decreases by less than
    /// `tol * max(objective, 1)`.
    pub tol: f64,
    pub parallel: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: 100,
            max_iter: 300,
            tol: 1e-9,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Labels renumbered by first appearance in node order.
    pub partition: Partition,
    /// `k x d`, rows ordered like the labels.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub objective: f64,
}

/// Row-major point set.
struct Points {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Points {
    fn from_rows(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Points { data, n, d }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the rows of `points` into `k` groups, keeping the best of
/// `opts.restarts` runs. Restart `r` draws from `seed.child(r)`; ties in the
/// objective go to the lowest restart index.
pub fn kmeans(points: &DMatrix<f64>, k: usize, opts: &KMeansOptions, seed: Seed) -> Result<KMeansResult> {
    kmeans_impl(points, k, opts, seed, None)
}

/// Like [`kmeans`], with one extra run started from the centroids of
/// `init_labels`. It competes with the random restarts and wins ties.
pub fn kmeans_warm(
    points: &DMatrix<f64>,
    k: usize,
    opts: &KMeansOptions,
    seed: Seed,
    init_labels: &[usize],
) -> Result<KMeansResult> {
    if init_labels.len() != points.nrows() || init_labels.iter().any(|&l| l >= k) {
        return Err(Error::config("initial labels do not match the point set"));
    }
    kmeans_impl(points, k, opts, seed, Some(init_labels))
}

fn kmeans_impl(
    points: &DMatrix<f64>,
    k: usize,
    opts: &KMeansOptions,
    seed: Seed,
    init: Option<&[usize]>,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::config(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("k-means input contains non-finite values"));
    }
    let pts = Points::from_rows(points);
    let restarts = opts.restarts.max(1);
    let run = |r: usize| {
        let mut rng = seed.child(r as u64).rng();
        let centers = seed_centers(&pts, k, &mut rng);
        lloyd(&pts, k, opts, centers)
    };
    let mut runs: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::with_capacity(restarts + 1);
    if let Some(labels) = init {
        let mut centers = vec![0.0; k * pts.d];
        update_centers(&pts, &mut centers, k, labels);
        runs.push(lloyd(&pts, k, opts, centers));
    }
    if opts.parallel {
        runs.par_extend((0..restarts).into_par_iter().map(run));
    } else {
        runs.extend((0..restarts).map(run));
    }
    let (labels, centroids, objective) = runs
        .into_iter()
        .reduce(|best, cur| if cur.2 < best.2 { cur } else { best })
        .expect("at least one restart");
    Ok(canonical(labels, centroids, objective, k, pts.d))
}

/// Renumbers clusters by first appearance and permutes centroids to match.
fn canonical(labels: Vec<usize>, centroids: Vec<f64>, objective: f64, k: usize, d: usize) -> KMeansResult {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    let mut c = DMatrix::zeros(k, d);
    for old in 0..k {
        for t in 0..d {
            c[(map[old], t)] = centroids[old * d + t];
        }
    }
    let labels = labels.into_iter().map(|l| map[l]).collect();
    KMeansResult {
        partition: Partition::new(labels, k).expect("labels < k"),
        centroids: c,
        objective,
    }
}

/// Greedy k-means++: each new center is the best of several D²-sampled
/// candidates by resulting potential. Falls back to the farthest point when
/// all distances vanish.
fn seed_centers(pts: &Points, k: usize, rng: &mut Rng) -> Vec<f64> {
    let (n, d) = (pts.n, pts.d);
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(pts.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();
    let trials = 2 + (k as f64).ln().floor() as usize;
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total <= 0.0 {
            0
        } else {
            let mut best_idx = 0;
            let mut best_pot = f64::INFINITY;
            for _ in 0..trials {
                let mut target = rng.random::<f64>() * total;
                let mut cand = n - 1;
                for (i, &c) in closest.iter().enumerate() {
                    if target < c {
                        cand = i;
                        break;
                    }
                    target -= c;
                }
                let pot: f64 = (0..n)
                    .map(|i| closest[i].min(sq_dist(pts.row(i), pts.row(cand))))
                    .sum();
                if pot < best_pot {
                    best_pot = pot;
                    best_idx = cand;
                }
            }
            best_idx
        };
        centers.extend_from_slice(pts.row(pick));
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(sq_dist(pts.row(i), pts.row(pick)));
        }
    }
    centers
}

/// Nearest center per point (lowest index on ties) and its squared distance.
fn assign(pts: &Points, centers: &[f64], k: usize, labels: &mut [usize], dists: &mut [f64]) {
    let d = pts.d;
    for i in 0..pts.n {
        let p = pts.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(p, &centers[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
    }
}

/// Moves the centroid of each empty cluster onto the point farthest from
/// its own centroid, taken from a cluster with more than one member.
/// Returns whether anything changed.
fn repair_empty(pts: &Points, centers: &mut [f64], k: usize, labels: &mut [usize], dists: &mut [f64]) -> bool {
    let d = pts.d;
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut changed = false;
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..pts.n)
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        let Some(far) = far else { break };
        if dists[far] <= 0.0 {
            // Every point coincides with its centroid; nothing to split.
            break;
        }
        centers[c * d..(c + 1) * d].copy_from_slice(pts.row(far));
        counts[labels[far]] -= 1;
        counts[c] = 1;
        labels[far] = c;
        dists[far] = 0.0;
        changed = true;
    }
    changed
}

fn update_centers(pts: &Points, centers: &mut [f64], k: usize, labels: &[usize]) {
    let d = pts.d;
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for i in 0..pts.n {
        let l = labels[i];
        counts[l] += 1;
        for (s, x) in sums[l * d..(l + 1) * d].iter_mut().zip(pts.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for t in 0..d {
                centers[c * d + t] = sums[c * d + t] / counts[c] as f64;
            }
        }
    }
}

fn lloyd(pts: &Points, k: usize, opts: &KMeansOptions, mut centers: Vec<f64>) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = vec![0; pts.n];
    let mut dists = vec![0.0; pts.n];
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_iter {
        assign(pts, &centers, k, &mut labels, &mut dists);
        repair_empty(pts, &mut centers, k, &mut labels, &mut dists);
        update_centers(pts, &mut centers, k, &labels);
        let obj: f64 = (0..pts.n)
            .map(|i| sq_dist(pts.row(i), &centers[labels[i] * pts.d..(labels[i] + 1) * pts.d]))
            .sum();
        if prev - obj <= opts.tol * obj.max(1.0) {
            break;
        }
        prev = obj;
    }
    // Final consistent assignment against the final centers.
    assign(pts, &centers, k, &mut labels, &mut dists);
    update_centers(pts, &mut centers, k, &labels);
    let obj = (0..pts.n)
        .map(|i| sq_dist(pts.row(i), &centers[labels[i] * pts.d..(labels[i] + 1) * pts.d]))
        .sum::<f64>();
    (labels, centers, obj)
}

/// Within-cluster sum of squares of an arbitrary labelling.
pub fn wcss(points: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let (n, d) = points.shape();
    let mut sums = DMatrix::<f64>::zeros(k, d);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts[labels[i]] += 1;
        for t in 0..d {
            sums[(labels[i], t)] += points[(i, t)];
        }
    }
    (0..n)
        .map(|i| {
            let l = labels[i];
            (0..d)
                .map(|t| (points[(i, t)] - sums[(l, t)] / counts[l] as f64).powi(2))
                .sum::<f64>()
        })
        .sum()
}

//! Alternating cycle counts through a node.
//!
//! For a node `i`, a set `S` of other nodes and odd `m`, the numerator
//! count sums `a(i,i2) b(i2,i3) a(i3,i4) ... b(i_{m-1},i_m) a(i_m,i)` and the
//! denominator count sums `b(i,i2) a(i2,i3) ... a(i_{m-1},i_m) b(i_m,i)` over
//! ordered tuples of distinct `i2..i_m` in `S`, where `a` is the edge weight
//! and `b = 1 - a`. Each unordered cycle is visited in both directions.

use nalgebra::DMatrix;

use crate::graph::{AdjacencyMatrix, BitRow, EdgeWeights};

/// Numerator and denominator cycle counts for one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleCounts {
    pub phi1: f64,
    pub phi2: f64,
}

impl CycleCounts {
    /// `phi1 / phi2`, or `None` when the denominator vanishes.
    pub fn ratio(&self) -> Option<f64> {
        (self.phi2 > 0.0).then(|| self.phi1 / self.phi2)
    }
}

/// Three-cycle counts of node `i` within `others` (which must not contain `i`).
///
/// Uses `phi1 = d(d-1) - t` and
/// `phi2 = e(S,S) - 2 e(N,S) + t`, where `N` is the neighborhood of `i` in
/// `S`, `d = |N|`, `t` is the ordered number of edges inside `N` and
/// `e(X,Y)` counts ordered pairs `(x, y)` with `x in X`, `y in Y` adjacent.
pub fn cycle_counts_m3(a: &AdjacencyMatrix, i: usize, others: &[usize]) -> CycleCounts {
    let n = a.n();
    let mut s = BitRow::new(n);
    for &j in others {
        debug_assert_ne!(j, i, "the node itself must not be in S");
        s.insert(j);
    }
    let mut nb = BitRow::new(n);
    for &j in a.neighbors(i) {
        if s.contains(j as usize) {
            nb.insert(j as usize);
        }
    }
    let d = nb.count();
    let mut e_ss = 0usize;
    let mut e_ns = 0usize;
    let mut t = 0usize;
    for &j in others {
        let row = a.row(j);
        let deg_s = row.intersection_count(&s);
        e_ss += deg_s;
        if nb.contains(j) {
            e_ns += deg_s;
            t += row.intersection_count(&nb);
        }
    }
    CycleCounts {
        phi1: (d * d.saturating_sub(1) - t) as f64,
        phi2: (e_ss + t - 2 * e_ns) as f64,
    }
}

/// Three-cycle counts for every member of one community, with per-community
/// degree tables shared across members. Returned in the order of `members`.
pub(crate) fn community_counts_m3(a: &AdjacencyMatrix, members: &[usize]) -> Vec<CycleCounts> {
    use rayon::prelude::*;

    let n = a.n();
    let mut c = BitRow::new(n);
    members.iter().for_each(|&v| c.insert(v));
    // deg_c[v]: neighbors of v inside the community.
    let deg_c: Vec<usize> = (0..n)
        .map(|v| if c.contains(v) { a.row(v).intersection_count(&c) } else { 0 })
        .collect();
    let total: usize = members.iter().map(|&v| deg_c[v]).sum();

    members
        .par_iter()
        .map(|&i| {
            // Neighbors of i in S = C \ {i}; i is never its own neighbor.
            let nb: Vec<usize> = a
                .neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(|&j| c.contains(j))
                .collect();
            let d = nb.len();
            let mut nb_bits = BitRow::new(n);
            nb.iter().for_each(|&j| nb_bits.insert(j));
            let mut t = 0usize;
            let mut e_ns = 0usize;
            for &j in &nb {
                t += a.row(j).intersection_count(&nb_bits);
                // deg_S(j) = deg_C(j) - 1 since j is adjacent to i.
                e_ns += deg_c[j] - 1;
            }
            let e_ss = total - 2 * deg_c[i];
            CycleCounts {
                phi1: (d * d.saturating_sub(1) - t) as f64,
                phi2: (e_ss + t - 2 * e_ns) as f64,
            }
        })
        .collect()
}

/// Dense community-restricted weights: `a` (edge) and `b = 1 - a`, both
/// with zero diagonal.
pub(crate) struct CommunityWeights {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl CommunityWeights {
    pub fn new(w: &impl EdgeWeights, members: &[usize]) -> Self {
        let s = members.len();
        let mut a = DMatrix::zeros(s, s);
        let mut b = DMatrix::zeros(s, s);
        for (p, &u) in members.iter().enumerate() {
            for (q, &v) in members.iter().enumerate() {
                if p != q {
                    let x = w.weight(u, v);
                    a[(p, q)] = x;
                    b[(p, q)] = 1.0 - x;
                }
            }
        }
        CommunityWeights { a, b }
    }
}

/// Three-cycle counts from real weights: `phi1 = x' B x` and
/// `phi2 = y' A y` over the community minus the node, with `x` the edge
/// weights from the node and `y = 1 - x`.
pub(crate) fn weighted_counts_m3(cw: &CommunityWeights) -> Vec<CycleCounts> {
    let s = cw.a.nrows();
    (0..s)
        .map(|c| {
            let mut phi1 = 0.0;
            let mut phi2 = 0.0;
            for p in 0..s {
                if p == c {
                    continue;
                }
                let (xp, yp) = (cw.a[(c, p)], cw.b[(c, p)]);
                for q in 0..s {
                    if q == c {
                        continue;
                    }
                    phi1 += xp * cw.b[(p, q)] * cw.a[(c, q)];
                    phi2 += yp * cw.a[(p, q)] * cw.b[(c, q)];
                }
            }
            CycleCounts { phi1, phi2 }
        })
        .collect()
}

/// Precomputed products for one alternating five-cycle pattern
/// `u(2) P(2,3) Q(3,4) P(4,5) u(5)` with distinct indices.
struct FivePattern<'a> {
    p: &'a DMatrix<f64>,
    q: &'a DMatrix<f64>,
    /// `P Q`.
    pq: DMatrix<f64>,
    /// `diag(P Q P)`.
    pqp_diag: Vec<f64>,
    /// `P ∘ P ∘ Q`.
    ppq: DMatrix<f64>,
}

impl<'a> FivePattern<'a> {
    fn new(p: &'a DMatrix<f64>, q: &'a DMatrix<f64>, pq: DMatrix<f64>) -> Self {
        let s = p.nrows();
        let pqp_diag = (0..s).map(|a| pq.row(a).dot(&p.column(a).transpose())).collect();
        let ppq = p.component_mul(p).component_mul(q);
        FivePattern {
            p,
            q,
            pq,
            pqp_diag,
            ppq,
        }
    }

    /// Distinct-index sum for node `c` with outer weights `u` (`u[c] = 0`),
    /// all inner indices restricted to the community minus `c`.
    ///
    /// Inclusion-exclusion over the coincidences `i2=i4`, `i2=i5`, `i3=i5`
    /// (the only non-adjacent pairs); `i2=i4` and `i3=i5` contribute equally
    /// and only their joint coincidence survives as a correction.
    fn count(&self, c: usize, u: &nalgebra::DVector<f64>) -> f64 {
        let (p, q, pq) = (self.p, self.q, &self.pq);
        let pu = p * u;
        let qpu = q * &pu;
        let total = pu.dot(&qpu) - 2.0 * pu[c] * qpu[c];
        let s = u.len();
        let mut e25 = 0.0;
        let mut e24 = 0.0;
        for a in 0..s {
            if a == c || u[a] == 0.0 {
                continue;
            }
            // (Q P)_{ca} = (P Q)_{ac}
            let pqp_aa = self.pqp_diag[a] - 2.0 * p[(a, c)] * pq[(a, c)];
            let pq_aa = pq[(a, a)] - p[(a, c)] * q[(c, a)];
            e25 += u[a] * u[a] * pqp_aa;
            e24 += u[a] * pq_aa * pu[a];
        }
        let joint = u.dot(&(&self.ppq * u));
        total - e25 - 2.0 * e24 + joint
    }
}

/// Five-cycle counts for all members, via community-level matrix products
/// and rank-one corrections that remove the node itself from inner sums.
pub(crate) fn weighted_counts_m5(cw: &CommunityWeights) -> Vec<CycleCounts> {
    use rayon::prelude::*;

    let s = cw.a.nrows();
    let ba = &cw.b * &cw.a;
    let ab = ba.transpose();
    // numerator: x B A B x; denominator: y A B A y
    let num = FivePattern::new(&cw.b, &cw.a, ba);
    let den = FivePattern::new(&cw.a, &cw.b, ab);
    (0..s)
        .into_par_iter()
        .map(|c| {
            let mut x = cw.a.column(c).into_owned();
            let mut y = cw.b.column(c).into_owned();
            x[c] = 0.0;
            y[c] = 0.0;
            CycleCounts {
                phi1: num.count(c, &x),
                phi2: den.count(c, &y),
            }
        })
        .collect()
}

/// Direct enumeration over ordered distinct tuples; cost grows like
/// `|C|^(m-1)`, so only meant for small communities or as a reference.
pub fn enumerate_counts(w: &impl EdgeWeights, i: usize, others: &[usize], m: usize) -> CycleCounts {
    assert!(m >= 3 && m % 2 == 1, "m must be odd and at least 3");
    let mut used = vec![false; others.len()];
    let edge = |u: usize, v: usize| w.weight(u, v);
    let phi1 = walk(&edge, i, i, others, &mut used, 1, m, true);
    let phi2 = walk(&edge, i, i, others, &mut used, 1, m, false);
    CycleCounts { phi1, phi2 }
}

/// Sums over extensions of a partial cycle. Step `s` (1-based) uses the edge
/// factor when `s` is odd for the numerator pattern, the complement
/// otherwise; the denominator pattern is the opposite.
#[allow(clippy::too_many_arguments)]
fn walk(
    edge: &impl Fn(usize, usize) -> f64,
    start: usize,
    last: usize,
    others: &[usize],
    used: &mut [bool],
    step: usize,
    m: usize,
    numerator: bool,
) -> f64 {
    let factor = |s: usize, u: usize, v: usize| {
        let x = edge(u, v);
        if (s % 2 == 1) == numerator {
            x
        } else {
            1.0 - x
        }
    };
    if step == m {
        return factor(step, last, start);
    }
    let mut total = 0.0;
    for (idx, &v) in others.iter().enumerate() {
        if used[idx] {
            continue;
        }
        let f = factor(step, last, v);
        if f == 0.0 {
            continue;
        }
        used[idx] = true;
        total += f * walk(edge, start, v, others, used, step + 1, m, numerator);
        used[idx] = false;
    }
    total
}

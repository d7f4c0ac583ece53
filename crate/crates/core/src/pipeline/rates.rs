//! Error-rate exponents of SCORE (`a0`) and R-SCORE (`a1`).

use crate::error::{Error, Result};

/// Exponents `(a0, a1)` at `beta` in `(0, 1/2)`.
pub fn rate_curves(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::domain(format!("beta={beta} outside (0, 1/2)")));
    }
    let a0 = if beta < 1.0 / 6.0 { 4.0 * beta } else { 1.0 - 2.0 * beta };
    let a1 = if beta <= 0.125 { 6.0 * beta } else { 1.0 - 2.0 * beta };
    Ok((a0, a1))
}

/// `points` evenly spaced values of beta over `[lo, hi]` with both curves.
pub fn rate_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<(f64, f64, f64)>> {
    if points < 2 || !(lo < hi) {
        return Err(Error::config("rate grid needs lo < hi and at least two points"));
    }
    (0..points)
        .map(|i| {
            let beta = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            rate_curves(beta).map(|(a0, a1)| (beta, a0, a1))
        })
        .collect()
}

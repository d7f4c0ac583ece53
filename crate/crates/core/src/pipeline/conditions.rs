//! Realized constants of the regularity conditions for a parameter set.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::matrix::DenseSymMatrix;
use crate::model::{lambda_min_abs, ModelMeans, ModelParams};
use crate::spectral::spectral_norm;

/// Values below this are treated as zero when flagging violations.
const ZERO: f64 = 1e-10;

/// Purely informational; nothing here blocks execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// `min_k n_k / n`.
    pub balance: f64,
    /// `min theta / mean theta` and `max theta / mean theta`.
    pub theta_lower: f64,
    pub theta_upper: f64,
    /// `max theta / min theta`.
    pub theta_spread: f64,
    /// `sqrt(n) mean(theta) |lambda_min(P)| / log n`.
    pub eigen_floor: f64,
    pub eigen_floor_violated: bool,
    /// `(lambda_1 - |lambda_2|) / lambda_1` of `P Pi' Theta^2 Pi`.
    pub gap_ratio: f64,
    /// Max over min entry magnitude of its leading right eigenvector.
    pub eigvec_ratio: f64,
    /// `|lambda_K(tilde Omega)| / lambda_1(tilde Omega)^(1/2)`.
    pub snr: f64,
    /// `||theta|| |lambda_min(P)|`.
    pub snr_calibrated: f64,
    /// `||(N - 11') o tilde Omega||_2 / |lambda_K(tilde Omega)|`.
    pub nonlinearity: f64,
    /// The nonzero eigenvalues of `tilde Omega`, by decreasing magnitude.
    pub tilde_eigenvalues: Vec<f64>,
}

pub fn check_conditions(params: &ModelParams) -> ConditionReport {
    let n = params.n();
    let k = params.k();
    let theta = params.theta();
    let mean = theta.iter().sum::<f64>() / n as f64;
    let (lo, hi) = theta
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    let sizes = params.partition().sizes();
    let balance = *sizes.iter().min().unwrap_or(&0) as f64 / n as f64;

    let lmin = lambda_min_abs(params.mixing()).abs();
    let eigen_floor = (n as f64).sqrt() * mean * lmin / (n as f64).ln();

    // P Pi' Theta^2 Pi = P D is similar to D^(1/2) P D^(1/2).
    let mut d = vec![0.0; k];
    for (i, &t) in theta.iter().enumerate() {
        d[params.partition().label(i)] += t * t;
    }
    let sq: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let p = params.mixing();
    let s = DMatrix::from_fn(k, k, |a, b| sq[a] * p[(a, b)] * sq[b]);
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let l1 = values[0];
    let gap_ratio = if k > 1 { (l1 - values[1].abs()) / l1 } else { 1.0 };
    let lead = eig.eigenvectors.column(order[0]);
    let right: Vec<f64> = (0..k).map(|a| (lead[a] / sq[a]).abs()).collect();
    let (rmin, rmax) = right
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let lk = values[k - 1].abs();

    let means = ModelMeans::new(params);
    let diff = means.omega.as_matrix() - means.tilde.as_matrix();
    let nonlin = spectral_norm(&DenseSymMatrix::new(diff).expect("symmetric"));

    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    ConditionReport {
        balance,
        theta_lower: lo / mean,
        theta_upper: hi / mean,
        theta_spread: hi / lo,
        eigen_floor,
        eigen_floor_violated: !(eigen_floor > ZERO),
        gap_ratio,
        eigvec_ratio: rmax / rmin,
        snr: lk / l1.sqrt(),
        snr_calibrated: norm * lmin,
        nonlinearity: nonlin / lk,
        tilde_eigenvalues: values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_offdiag_mixing;
    use crate::partition::Partition;

    #[test]
    fn balanced_equal_theta() {
        let part = Partition::blocks(&[10, 10, 10]);
        let params = ModelParams::new(vec![0.2; 30], part, uniform_offdiag_mixing(3, 0.3).unwrap()).unwrap();
        let r = check_conditions(&params);
        assert!((r.balance - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.theta_spread, 1.0);
        assert!(!r.eigen_floor_violated);
        assert!((r.eigvec_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_mixing_flagged() {
        let part = Partition::blocks(&[5, 5]);
        let params = ModelParams::new(vec![0.3; 10], part, DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(check_conditions(&params).eigen_floor_violated);
    }

    #[test]
    fn calibrated_snr_setting_a() {
        let n = 300;
        let theta = vec![60.0 / (n as f64).sqrt(); n];
        let part = Partition::blocks(&[100, 100, 100]);
        let params = ModelParams::new(theta, part, uniform_offdiag_mixing(3, 23.0 / 30.0).unwrap()).unwrap();
        let r = check_conditions(&params);
        assert!((r.snr_calibrated - 14.0).abs() < 1e-9);
        // With equal theta and sizes |lambda_K(tilde Omega)| = (1 - beta) ||theta||^2 / K.
        let lk = (1.0 - 23.0 / 30.0) * 3600.0 / 3.0;
        assert!((r.tilde_eigenvalues[2].abs() - lk).abs() < 1e-8);
    }
}

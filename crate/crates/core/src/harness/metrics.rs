use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// CSV column order of [`MetricsRow`].
pub const CSV_HEADER: [&str; 10] = [
    "method", "t", "k", "rep", "seed", "gv", "mse", "subopt", "logdet", "wall_ms",
];

/// One replication of one (method, T, K) cell.
///
/// `gv` is the model-based generalized variance `det H_T(θ̂)⁻¹` of this run,
/// `mse` the error norm `‖θ̂ − θ*‖₂`, and `logdet` the log-determinant of the
/// normalized information `H_T(θ̂) / T`. Failed replications carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub t: usize,
    pub k: usize,
    pub rep: usize,
    pub seed: u64,
    pub gv: f64,
    pub mse: f64,
    pub subopt: f64,
    pub logdet: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn failed(&self) -> bool {
        self.mse.is_nan()
    }
}

/// Determinant of the unbiased sample covariance of replicated estimates.
pub fn compute_gv(estimates: &[Vector]) -> Result<f64> {
    if estimates.len() < 2 {
        return Err(Error::invalid("generalized variance needs at least two estimates"));
    }
    let d = estimates[0].len();
    if let Some(e) = estimates.iter().find(|e| e.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: e.len(),
        });
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().fold(Vector::zeros(d), |acc, e| acc + e) / r;
    let mut cov = DMatrix::zeros(d, d);
    for e in estimates {
        let c = e - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= r - 1.0;
    Ok(cov.determinant().max(0.0))
}

/// Mean error norm `E‖θ̂ − θ*‖₂` over replicates.
pub fn compute_mse(estimates: &[Vector], theta_star: &Vector) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::NoData);
    }
    let total: f64 = estimates.iter().map(|e| (e - theta_star).norm()).sum();
    Ok(total / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn gv_examples() {
        let same = vec![v(&[1.0, 2.0]); 4];
        assert_eq!(compute_gv(&same).unwrap(), 0.0);
        assert_relative_eq!(compute_gv(&[v(&[0.0]), v(&[2.0])]).unwrap(), 2.0, epsilon = 1e-15);
        assert!(compute_gv(&[v(&[0.0])]).is_err());
    }

    #[test]
    fn gv_of_standard_normal_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let draws: Vec<Vector> = (0..50)
            .map(|_| Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let gv = compute_gv(&draws).unwrap();
        assert!((0.5..=2.0).contains(&gv), "gv {gv}");
    }

    #[test]
    fn mse_examples() {
        let star = v(&[1.0, -1.0]);
        assert_eq!(compute_mse(&[star.clone(), star.clone()], &star).unwrap(), 0.0);
        assert_eq!(compute_mse(&[v(&[2.0, -1.0])], &star).unwrap(), 1.0);
        assert_eq!(compute_mse(&[v(&[2.0, -1.0]), v(&[1.0, 2.0])], &star).unwrap(), 2.0);
        assert!(compute_mse(&[], &star).is_err());
    }
}

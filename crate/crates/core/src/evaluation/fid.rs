//! Gaussian feature statistics and the Fréchet distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Mean and unbiased covariance of a feature sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample statistics of `features` (one row per image). The covariance
/// divides by `n - 1` and is symmetrized against round-off.
pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Invalid(format!("feature statistics need at least 2 samples, got {n}")));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::Invalid("feature rows must share one non-zero length".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let mut centered = x;
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let mut covariance = centered.transpose() * &centered / (n - 1) as f64;
    let t = covariance.transpose();
    covariance += t;
    covariance *= 0.5;
    Ok(FeatureStats { mean, covariance, n })
}

const EIGEN_EPS: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;
/// Diagonal jitter applied once when a decomposition fails to converge.
pub const SQRT_JITTER: f64 = 1e-6;

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// PSD square root via eigendecomposition; negative round-off eigenvalues clamp to 0.
fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let e = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)?;
    let roots = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    Some(sym(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose()))
}

/// `Tr((A B)^1/2)` computed as `Tr((A^1/2 B A^1/2)^1/2)`, whose argument is
/// symmetric PSD so every root is real.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ra = psd_sqrt(a)?;
    let inner = sym(&ra * b * &ra);
    let e = SymmetricEigen::try_new(inner, EIGEN_EPS, EIGEN_MAX_ITER)?;
    Some(e.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// Result of a Fréchet computation, noting whether jitter was needed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frechet {
    pub distance: f64,
    pub jittered: bool,
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^1/2)`, clamped at 0.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    Ok(frechet_distance_detailed(a, b)?.distance)
}

pub fn frechet_distance_detailed(a: &FeatureStats, b: &FeatureStats) -> Result<Frechet> {
    if a.dim() != b.dim() {
        return Err(Error::Invalid(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let traces = a.covariance.trace() + b.covariance.trace();
    let (tr_sqrt, jittered) = match trace_sqrt_product(&a.covariance, &b.covariance) {
        Some(t) => (t, false),
        None => {
            log::warn!("matrix square root did not converge; retrying with {SQRT_JITTER:e} diagonal jitter");
            let eye = DMatrix::<f64>::identity(a.dim(), a.dim()) * SQRT_JITTER;
            let t = trace_sqrt_product(&(&a.covariance + &eye), &(&b.covariance + &eye)).ok_or_else(|| {
                let diag = |m: &DMatrix<f64>| {
                    let d = m.diagonal();
                    (d.min(), d.max())
                };
                Error::Numerical(format!(
                    "covariance square root failed to converge after jitter (dim {}, diag ranges {:?} and {:?})",
                    a.dim(),
                    diag(&a.covariance),
                    diag(&b.covariance)
                ))
            })?;
            (t, true)
        }
    };
    let distance = diff + traces - 2.0 * tr_sqrt;
    if !distance.is_finite() {
        return Err(Error::Numerical("Fréchet distance is not finite".into()));
    }
    Ok(Frechet {
        distance: distance.max(0.0),
        jittered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_1d(mean: f64, var: f64) -> FeatureStats {
        FeatureStats {
            mean: DVector::from_element(1, mean),
            covariance: DMatrix::from_element(1, 1, var),
            n: 2,
        }
    }

    #[test]
    fn hand_computed_stats() {
        let s = gaussian_stats(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.covariance, DMatrix::from_element(2, 2, 2.0));
        let z = gaussian_stats(&[vec![3.0, 1.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(z.covariance, DMatrix::zeros(2, 2));
        assert!(gaussian_stats(&[vec![1.0]]).is_err());
        assert!(gaussian_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn one_dimensional_closed_forms() {
        assert!((frechet_distance(&stats_1d(0.0, 1.0), &stats_1d(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-9);
        assert!((frechet_distance(&stats_1d(0.0, 1.0), &stats_1d(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-9);
        assert!((frechet_distance(&stats_1d(2.0, 9.0), &stats_1d(-1.0, 1.0)).unwrap() - 13.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = gaussian_stats(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(frechet_distance(&a, &stats_1d(0.0, 1.0)).is_err());
    }
}

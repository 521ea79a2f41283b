//! Reconstruction metrics: PSNR and per-pixel uncertainty coverage.

use anyhow::{bail, Result};
use serde::Serialize;

/// Per-pixel coverage statistics over a sample set, plus summary scalars.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// PSNR of the sample mean against the truth, in dB. `None` encodes the
    /// +infinity sentinel (zero MSE), which JSON cannot represent directly.
    pub psnr_db: Option<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// |mean - truth| / std per pixel; +inf where std = 0 and mean != truth,
    /// 0 where both agree exactly.
    pub z_score: Vec<f64>,
    /// Fraction of pixels with z-score above 3.
    pub outlier_fraction: f64,
    /// Likelihood potential evaluated at the mean image, when available.
    pub data_mismatch: Option<f64>,
}

/// 10·log10(peak²/MSE); returns `None` (the +inf sentinel) when MSE is zero.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<Option<f64>> {
    if a.len() != b.len() {
        bail!("psnr: length mismatch ({} vs {})", a.len(), b.len());
    }
    if a.is_empty() {
        bail!("psnr: empty arrays");
    }
    if !(peak > 0.0) {
        bail!("psnr: peak must be positive, got {peak}");
    }
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(None);
    }
    Ok(Some(10.0 * (peak * peak / mse).log10()))
}

/// Per-pixel mean/std (unbiased), z-scores against the truth, and the
/// fraction of pixels whose z-score exceeds 3.
///
/// Pixels with zero sample std count as outliers iff the sample mean differs
/// from the truth.
pub fn coverage_stats(samples: &[Vec<f64>], truth: &[f64]) -> Result<MetricsReport> {
    if samples.len() < 2 {
        bail!(
            "coverage_stats: need at least 2 samples, got {}",
            samples.len()
        );
    }
    let dim = truth.len();
    for (i, s) in samples.iter().enumerate() {
        if s.len() != dim {
            bail!(
                "coverage_stats: sample {i} has length {} but truth has {dim}",
                s.len()
            );
        }
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, &x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(s) {
            let d = x - m;
            *v += d * d;
        }
    }
    let mut std = vec![0.0; dim];
    for (s, v) in std.iter_mut().zip(&var) {
        *s = (v / (n - 1.0)).sqrt();
    }

    let mut z_score = vec![0.0; dim];
    let mut outliers = 0usize;
    for i in 0..dim {
        let dev = (mean[i] - truth[i]).abs();
        let z = if std[i] > 0.0 {
            dev / std[i]
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        z_score[i] = z;
        if z > 3.0 {
            outliers += 1;
        }
    }

    Ok(MetricsReport {
        psnr_db: None,
        mean,
        std,
        z_score,
        outlier_fraction: outliers as f64 / dim as f64,
        data_mismatch: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn psnr_constant_offset() {
        let a = vec![0.2; 50];
        let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        let db = psnr(&a, &b, 1.0).unwrap().unwrap();
        assert!((db - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_identical_is_infinite_sentinel() {
        let a = vec![0.3, 0.7, 0.1];
        assert!(psnr(&a, &a, 1.0).unwrap().is_none());
    }

    #[test]
    fn psnr_symmetric() {
        let a = vec![0.1, 0.9, 0.4, 0.6];
        let b = vec![0.3, 0.8, 0.2, 0.5];
        let ab = psnr(&a, &b, 2.0).unwrap().unwrap();
        let ba = psnr(&b, &a, 2.0).unwrap().unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn coverage_all_samples_equal_truth() {
        let truth = vec![1.0, -2.0, 0.5];
        let samples = vec![truth.clone(), truth.clone(), truth.clone()];
        let report = coverage_stats(&samples, &truth).unwrap();
        assert_eq!(report.outlier_fraction, 0.0);
        assert!(report.z_score.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn coverage_two_sample_symmetric_pair() {
        let truth = vec![4.0];
        let samples = vec![vec![3.0], vec![5.0]];
        let report = coverage_stats(&samples, &truth).unwrap();
        assert_eq!(report.mean, vec![4.0]);
        assert_eq!(report.z_score, vec![0.0]);
    }

    #[test]
    fn coverage_zero_std_off_truth_is_outlier() {
        let truth = vec![0.0];
        let samples = vec![vec![1.0], vec![1.0]];
        let report = coverage_stats(&samples, &truth).unwrap();
        assert_eq!(report.outlier_fraction, 1.0);
    }

    #[test]
    fn coverage_gaussian_tail_mass() {
        // i.i.d. N(truth, 1) samples: expected outlier fraction ~ 0.27%.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 512;
        let truth = vec![0.0; dim];
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                (0..dim)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let report = coverage_stats(&samples, &truth).unwrap();
        assert!(
            report.outlier_fraction < 0.01,
            "outlier fraction {}",
            report.outlier_fraction
        );
    }

    #[test]
    fn coverage_requires_two_samples() {
        assert!(coverage_stats(&[vec![1.0]], &[1.0]).is_err());
    }
}

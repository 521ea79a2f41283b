//! The denoiser contract D(x; σ) and its analytic implementations.
//!
//! A denoiser is the posterior-mean estimate of clean data given data
//! corrupted by i.i.d. Gaussian noise of level σ. It relates to the score
//! of the σ-mollified prior by D(x; σ) = x + σ²∇log p(x; σ).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::schedules::{sigma_vp, sigma_vp_inverse};

pub trait Denoiser: Send + Sync {
    fn denoise(&self, z: &DVector<f64>, sigma: f64) -> Result<DVector<f64>>;

    /// ∇log p(z; σ) of the mollified prior, when available in closed form.
    fn score(&self, _z: &DVector<f64>, _sigma: f64) -> Option<DVector<f64>> {
        None
    }

    fn dim(&self) -> usize;
}

/// SPD covariance cached as a symmetric eigendecomposition, so every
/// denoiser call costs two dense mat-vecs instead of a solve.
#[derive(Debug, Clone)]
pub struct Covariance {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl Covariance {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidParameter("covariance must be square".into()));
        }
        let sym_err = (&matrix - matrix.transpose()).abs().max();
        if sym_err > 1e-10 * matrix.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("covariance must be symmetric".into()));
        }
        let eig = matrix.symmetric_eigen();
        Self::eigen(eig.eigenvectors, eig.eigenvalues)
    }

    /// Diagonal-in-orthonormal-basis form: Σ = V diag(values) Vᵀ.
    pub fn eigen(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter(
                "covariance is not positive definite".into(),
            ));
        }
        if vectors.nrows() != vectors.ncols() || vectors.nrows() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: vectors.nrows(),
                context: "Covariance::eigen",
            });
        }
        Ok(Self { vectors, values })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::eigen(DMatrix::identity(dim, dim), DVector::from_element(dim, variance))
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.values[j];
        }
        scaled * self.vectors.transpose()
    }

    /// Σ(Σ + σ²I)⁻¹ v
    fn shrink(&self, v: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let mut coeffs = self.vectors.transpose() * v;
        for (c, &lam) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= lam / (lam + sigma2);
        }
        &self.vectors * coeffs
    }

    /// (Σ + σ²I)⁻¹ v
    fn solve_mollified(&self, v: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let mut coeffs = self.vectors.transpose() * v;
        for (c, &lam) in coeffs.iter_mut().zip(self.values.iter()) {
            *c /= lam + sigma2;
        }
        &self.vectors * coeffs
    }

    /// log N(z; μ, Σ + σ²I)
    fn log_density_mollified(&self, diff: &DVector<f64>, sigma2: f64) -> f64 {
        let coeffs = self.vectors.transpose() * diff;
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (c, &lam) in coeffs.iter().zip(self.values.iter()) {
            quad += c * c / (lam + sigma2);
            logdet += (lam + sigma2).ln();
        }
        let n = self.values.len() as f64;
        -0.5 * (n * (2.0 * core::f64::consts::PI).ln() + logdet + quad)
    }
}

#[derive(Debug, Clone)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub covariance: Covariance,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, covariance: Covariance) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::DimensionMismatch {
                expected: covariance.dim(),
                got: mean.len(),
                context: "GaussianPrior::new",
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), Covariance::isotropic(1, variance)?)
    }
}

/// Conditional mean E[x | x + σε = z] under a Gaussian prior:
/// μ + Σ(Σ + σ²I)⁻¹(z − μ).
pub fn gaussian_denoise(prior: &GaussianPrior, z: &DVector<f64>, sigma: f64) -> DVector<f64> {
    if sigma == 0.0 {
        return z.clone();
    }
    let diff = z - &prior.mean;
    &prior.mean + prior.covariance.shrink(&diff, sigma * sigma)
}

/// ∇log N(z; μ, Σ + σ²I) = −(Σ + σ²I)⁻¹(z − μ)
pub fn gaussian_score(prior: &GaussianPrior, z: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let diff = z - &prior.mean;
    -prior.covariance.solve_mollified(&diff, sigma * sigma)
}

impl Denoiser for GaussianPrior {
    fn denoise(&self, z: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        Ok(gaussian_denoise(self, z, sigma))
    }

    fn score(&self, z: &DVector<f64>, sigma: f64) -> Option<DVector<f64>> {
        Some(gaussian_score(self, z, sigma))
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone)]
pub struct GmmPrior {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianPrior>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianPrior>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::InvalidParameter(
                "mixture needs one weight per component".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let dim = components[0].mean.len();
        if components.iter().any(|c| c.mean.len() != dim) {
            return Err(Error::InvalidParameter(
                "mixture components disagree on dimension".into(),
            ));
        }
        Ok(Self { weights, components })
    }

    /// Equal-weight scalar mixture, a convenience for 1-D experiments.
    pub fn scalar_symmetric(means: &[f64], variance: f64) -> Result<Self> {
        let w = 1.0 / means.len() as f64;
        let comps = means
            .iter()
            .map(|&m| GaussianPrior::scalar(m, variance))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![w; means.len()], comps)
    }

    /// Posterior responsibilities r_i ∝ w_i N(z; μ_i, Σ_i + σ²I), computed
    /// in log-space with max-subtraction.
    fn responsibilities(&self, z: &DVector<f64>, sigma: f64) -> Vec<f64> {
        let sigma2 = sigma * sigma;
        let mut logs: Vec<f64> = self
            .weights
            .iter()
            .zip(self.components.iter())
            .map(|(&w, comp)| {
                let diff = z - &comp.mean;
                if w == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() + comp.covariance.log_density_mollified(&diff, sigma2)
                }
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in logs.iter_mut() {
            *l /= total;
        }
        logs
    }
}

/// Conditional mean under the mixture: Σ_i r_i [μ_i + Σ_i(Σ_i+σ²I)⁻¹(z−μ_i)].
pub fn gmm_denoise(prior: &GmmPrior, z: &DVector<f64>, sigma: f64) -> DVector<f64> {
    if sigma == 0.0 {
        return z.clone();
    }
    let r = prior.responsibilities(z, sigma);
    let mut out = DVector::zeros(z.len());
    for (ri, comp) in r.iter().zip(prior.components.iter()) {
        if *ri > 0.0 {
            out += gaussian_denoise(comp, z, sigma) * *ri;
        }
    }
    out
}

/// Gradient of the log σ-mollified mixture density:
/// Σ_i r_i · ∇log N(z; μ_i, Σ_i + σ²I).
pub fn gmm_score(prior: &GmmPrior, z: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let r = prior.responsibilities(z, sigma);
    let mut out = DVector::zeros(z.len());
    for (ri, comp) in r.iter().zip(prior.components.iter()) {
        if *ri > 0.0 {
            out += gaussian_score(comp, z, sigma) * *ri;
        }
    }
    out
}

/// log p(z; σ) of the mollified mixture, used by oracles and tests.
pub fn gmm_log_density(prior: &GmmPrior, z: &DVector<f64>, sigma: f64) -> f64 {
    let sigma2 = sigma * sigma;
    let logs: Vec<f64> = prior
        .weights
        .iter()
        .zip(prior.components.iter())
        .map(|(&w, comp)| {
            let diff = z - &comp.mean;
            if w == 0.0 {
                f64::NEG_INFINITY
            } else {
                w.ln() + comp.covariance.log_density_mollified(&diff, sigma2)
            }
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

impl Denoiser for GmmPrior {
    fn denoise(&self, z: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        Ok(gmm_denoise(self, z, sigma))
    }

    fn score(&self, z: &DVector<f64>, sigma: f64) -> Option<DVector<f64>> {
        Some(gmm_score(self, z, sigma))
    }

    fn dim(&self) -> usize {
        self.components[0].mean.len()
    }
}

/// Adapter turning a raw VP-trained predictor F(x; c_noise) into the
/// denoiser contract:
/// D(x; σ) = c_skip(σ)x + c_out(σ) F(c_in(σ)x; c_noise(σ))
/// with c_skip = 1, c_out = −σ, c_in = 1/√(σ²+1), c_noise = 999·σ_VP⁻¹(σ).
pub struct VpPreconditioned<F> {
    raw: F,
    dim: usize,
}

pub fn vp_c_in(sigma: f64) -> f64 {
    1.0 / (sigma * sigma + 1.0).sqrt()
}

pub fn vp_c_noise(sigma: f64) -> Result<f64> {
    Ok(999.0 * sigma_vp_inverse(sigma)?)
}

impl<F> VpPreconditioned<F>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync,
{
    pub fn new(raw: F, dim: usize) -> Self {
        Self { raw, dim }
    }
}

impl<F> Denoiser for VpPreconditioned<F>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync,
{
    fn denoise(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        let sigma_cap = sigma_vp(1.0)?;
        if sigma > sigma_cap {
            return Err(Error::Domain(format!(
                "VP preconditioning: sigma={sigma} exceeds sigma_vp(1)={sigma_cap:.4}"
            )));
        }
        if sigma == 0.0 {
            // c_out = 0, only the skip path remains
            return Ok(x.clone());
        }
        let c_noise = vp_c_noise(sigma)?;
        let scaled = x * vp_c_in(sigma);
        Ok(x + (self.raw)(&scaled, c_noise) * (-sigma))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn gaussian_denoise_scalar_example() {
        // N(0,1) prior, σ=1, z=2: Tweedie with score −z/(1+σ²) gives 1.0
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let d = gaussian_denoise(&prior, &scalar(2.0), 1.0);
        assert!((d[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_denoise_zero_sigma_is_identity() {
        let prior = GaussianPrior::scalar(0.3, 2.0).unwrap();
        let z = scalar(7.5);
        assert_eq!(gaussian_denoise(&prior, &z, 0.0), z);
    }

    #[test]
    fn gaussian_denoise_at_mean_returns_mean() {
        let mean = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
        let cov = Covariance::dense(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 0.5],
        ))
        .unwrap();
        let prior = GaussianPrior::new(mean.clone(), cov).unwrap();
        for sigma in [0.0, 0.1, 3.0] {
            let d = gaussian_denoise(&prior, &mean, sigma);
            assert!((&d - &mean).norm() < 1e-12);
        }
    }

    #[test]
    fn gmm_single_component_matches_gaussian() {
        let comp = GaussianPrior::scalar(0.7, 0.3).unwrap();
        let gmm = GmmPrior::new(vec![1.0], vec![comp.clone()]).unwrap();
        for z in [-1.0, 0.0, 2.5] {
            for sigma in [0.1, 1.0, 5.0] {
                let a = gmm_denoise(&gmm, &scalar(z), sigma);
                let b = gaussian_denoise(&comp, &scalar(z), sigma);
                assert!((a[0] - b[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gmm_symmetric_midpoint_denoises_to_zero() {
        let gmm = GmmPrior::scalar_symmetric(&[-1.0, 1.0], 0.01).unwrap();
        for sigma in [0.1, 0.5, 2.0] {
            let d = gmm_denoise(&gmm, &scalar(0.0), sigma);
            assert!(d[0].abs() < 1e-12);
        }
    }

    #[test]
    fn gmm_denoise_matches_quadrature_oracle() {
        // E[x | z] under prior ½N(−1,0.01)+½N(1,0.01), σ=0.5, z=0.5,
        // by 10⁶-point trapezoid quadrature of x·p(z|x)p(x).
        let gmm = GmmPrior::scalar_symmetric(&[-1.0, 1.0], 0.01).unwrap();
        let (sigma, z) = (0.5, 0.5);
        let n = 1_000_000usize;
        let (lo, hi) = (-3.0, 3.0);
        let h = (hi - lo) / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let px = 0.5 * (-(x + 1.0) * (x + 1.0) / 0.02).exp()
                + 0.5 * (-(x - 1.0) * (x - 1.0) / 0.02).exp();
            let lik = (-(z - x) * (z - x) / (2.0 * sigma * sigma)).exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            num += w * x * px * lik;
            den += w * px * lik;
        }
        let oracle = num / den;
        let d = gmm_denoise(&gmm, &scalar(z), sigma);
        assert!(
            (d[0] - oracle).abs() < 1e-7,
            "denoiser {} vs quadrature {}",
            d[0],
            oracle
        );
    }

    #[test]
    fn gmm_score_scalar_gaussian_example() {
        let gmm = GmmPrior::new(vec![1.0], vec![GaussianPrior::scalar(0.0, 1.0).unwrap()]).unwrap();
        let s = gmm_score(&gmm, &scalar(2.0), 1.0);
        assert!((s[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn gmm_score_zero_at_symmetric_midpoint() {
        let gmm = GmmPrior::scalar_symmetric(&[-1.0, 1.0], 0.01).unwrap();
        let s = gmm_score(&gmm, &scalar(0.0), 0.7);
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn gmm_score_near_zero_at_far_separated_component_mean() {
        let gmm = GmmPrior::scalar_symmetric(&[-40.0, 40.0], 0.5).unwrap();
        let s = gmm_score(&gmm, &scalar(40.0), 0.3);
        assert!(s[0].abs() < 1e-9, "score {}", s[0]);
    }

    #[test]
    fn mixture_weight_validation() {
        let c = GaussianPrior::scalar(0.0, 1.0).unwrap();
        assert!(GmmPrior::new(vec![0.6, 0.6], vec![c.clone(), c.clone()]).is_err());
        assert!(GmmPrior::new(vec![1.2, -0.2], vec![c.clone(), c.clone()]).is_err());
        assert!(GmmPrior::new(vec![], vec![]).is_err());
    }

    #[test]
    fn covariance_rejects_non_spd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        assert!(Covariance::dense(m).is_err());
    }

    #[test]
    fn vp_preconditioning_constants() {
        assert!((vp_c_in(1.0) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
        assert_eq!(vp_c_noise(0.0).unwrap(), 0.0);
    }

    #[test]
    fn vp_preconditioning_zero_raw_is_identity() {
        let wrapped = VpPreconditioned::new(|x: &DVector<f64>, _| DVector::zeros(x.len()), 3);
        let x = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
        assert_eq!(wrapped.denoise(&x, 3.0).unwrap(), x);
        assert_eq!(wrapped.denoise(&x, 0.0).unwrap(), x);
        assert!(wrapped.denoise(&x, 200.0).is_err());
    }

    #[test]
    fn vp_preconditioning_applies_scalings() {
        // raw echoes its input, so D = x − σ·c_in·x
        let wrapped = VpPreconditioned::new(|x: &DVector<f64>, _| x.clone(), 1);
        let x = scalar(2.0);
        let sigma = 1.5;
        let d = wrapped.denoise(&x, sigma).unwrap();
        let expected = 2.0 - sigma * vp_c_in(sigma) * 2.0;
        assert!((d[0] - expected).abs() < 1e-14);
    }

    fn arbitrary_gmm() -> impl Strategy<Value = GmmPrior> {
        (
            prop::collection::vec(0.1f64..1.0, 1..4),
            prop::collection::vec((-3.0f64..3.0, 0.05f64..2.0), 1..4),
        )
            .prop_map(|(raw_w, params)| {
                let k = raw_w.len().min(params.len());
                let total: f64 = raw_w[..k].iter().sum();
                // renormalize exactly so the 1e-12 gate passes
                let mut weights: Vec<f64> = raw_w[..k].iter().map(|w| w / total).collect();
                let correction: f64 = weights.iter().sum();
                weights[0] += 1.0 - correction;
                let comps = params[..k]
                    .iter()
                    .map(|&(m, v)| GaussianPrior::scalar(m, v).unwrap())
                    .collect();
                GmmPrior::new(weights, comps).unwrap()
            })
    }

    proptest! {
        #[test]
        fn tweedie_consistency(
            gmm in arbitrary_gmm(),
            z in -4.0f64..4.0,
            sigma in 0.05f64..3.0,
        ) {
            let zv = scalar(z);
            let d = gmm_denoise(&gmm, &zv, sigma);
            let s = gmm_score(&gmm, &zv, sigma);
            let tweedie = &zv + s * sigma * sigma;
            prop_assert!((d - tweedie).norm() < 1e-9 * (1.0 + zv.norm()));
        }

        #[test]
        fn gmm_score_matches_finite_differences(
            gmm in arbitrary_gmm(),
            z in -4.0f64..4.0,
            sigma in 0.1f64..3.0,
        ) {
            let s = gmm_score(&gmm, &scalar(z), sigma)[0];
            let h = 1e-6;
            let fd = (gmm_log_density(&gmm, &scalar(z + h), sigma)
                - gmm_log_density(&gmm, &scalar(z - h), sigma))
                / (2.0 * h);
            prop_assert!((s - fd).abs() / fd.abs().max(1e-3) < 1e-6);
        }

        #[test]
        fn gaussian_denoise_contracts_toward_mean(
            z in -10.0f64..10.0,
            mean in -3.0f64..3.0,
            var in 0.05f64..4.0,
            sigma in 0.0f64..5.0,
        ) {
            let prior = GaussianPrior::scalar(mean, var).unwrap();
            let d = gaussian_denoise(&prior, &scalar(z), sigma);
            prop_assert!((d[0] - mean).abs() <= (z - mean).abs() + 1e-12);
        }
    }
}

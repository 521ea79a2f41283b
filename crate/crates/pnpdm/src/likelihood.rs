//! The likelihood step: sampling z from
//! exp(−f(z; y) − ‖x − z‖²/(2ρ²)), exactly for linear-Gaussian models with
//! spectral structure, by Langevin Monte Carlo otherwise.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forward::{LinearOperator, Potential};

/// Conjugate Gaussian likelihood step for y = Ax + N(0, σ_y²I).
///
/// The target is N(m(x), Λ⁻¹) with Λ = AᵀA/σ_y² + I/ρ² and
/// m(x) = Λ⁻¹(Aᵀy/σ_y² + x/ρ²); draws use the spectral shortcut
/// z = m(x) + Λ^{-1/2} η.
pub struct ConjugateGaussianSampler {
    operator: Arc<dyn LinearOperator>,
    /// Aᵀy, cached at construction.
    adjoint_y: DVector<f64>,
    noise_sigma: f64,
}

impl ConjugateGaussianSampler {
    pub fn new(
        operator: Arc<dyn LinearOperator>,
        measurement: &DVector<f64>,
        noise_sigma: f64,
    ) -> Result<Self> {
        if measurement.len() != operator.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: operator.output_dim(),
                got: measurement.len(),
                context: "ConjugateGaussianSampler measurement",
            });
        }
        if noise_sigma <= 0.0 {
            return Err(Error::InvalidParameter("noise_sigma must be positive".into()));
        }
        if !operator.has_spectral() {
            return Err(Error::NoSpectralStructure);
        }
        let adjoint_y = operator.adjoint(measurement);
        Ok(Self { operator, adjoint_y, noise_sigma })
    }

    /// Mean m(x) of the conditional, exposed for distributional tests.
    pub fn mean(&self, x: &DVector<f64>, rho: f64) -> DVector<f64> {
        let a = 1.0 / (self.noise_sigma * self.noise_sigma);
        let b = 1.0 / (rho * rho);
        let rhs = &self.adjoint_y * a + x * b;
        self.operator
            .solve_shifted(&rhs, a, b)
            .expect("spectral structure checked at construction")
    }

    /// One exact draw z ~ N(m(x), Λ⁻¹).
    pub fn sample(&self, x: &DVector<f64>, rho: f64, rng: &mut impl Rng) -> DVector<f64> {
        let a = 1.0 / (self.noise_sigma * self.noise_sigma);
        let b = 1.0 / (rho * rho);
        let m = self.mean(x, rho);
        let eta = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let colored = self
            .operator
            .sqrt_inv_shifted(&eta, a, b)
            .expect("spectral structure checked at construction");
        m + colored
    }
}

/// Langevin Monte Carlo parameters: step size γ and iteration count J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmcConfig {
    pub gamma: f64,
    pub iterations: usize,
}

impl LmcConfig {
    pub fn new(gamma: f64, iterations: usize) -> Result<Self> {
        if gamma <= 0.0 || iterations == 0 {
            return Err(Error::InvalidParameter(format!(
                "LMC needs gamma > 0 and iterations >= 1, got ({gamma}, {iterations})"
            )));
        }
        Ok(Self { gamma, iterations })
    }

    /// Experiment defaults: CDP (1e-3, 100); FPR (1e-4, 100).
    pub fn cdp_default() -> Self {
        Self { gamma: 1e-3, iterations: 100 }
    }

    pub fn fpr_default() -> Self {
        Self { gamma: 1e-4, iterations: 100 }
    }
}

/// Deterministic part of one Langevin update:
/// u − γ∇f(u) − (γ/ρ²)(u − x).
pub fn lmc_drift_step(
    potential: &dyn Potential,
    u: &DVector<f64>,
    x: &DVector<f64>,
    rho: f64,
    gamma: f64,
) -> Result<DVector<f64>> {
    let grad = potential.gradient(u);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { iteration: 0, step: "lmc_gradient" });
    }
    Ok(u - grad * gamma - (u - x) * (gamma / (rho * rho)))
}

/// Unadjusted Langevin chain targeting exp(−f(u) − ‖u − x‖²/(2ρ²)):
/// u_{j+1} = u_j − γ∇f(u_j) − (γ/ρ²)(u_j − x) + √(2γ) ε_j, u_0 = x.
pub fn lmc_sample(
    potential: &dyn Potential,
    x: &DVector<f64>,
    rho: f64,
    config: &LmcConfig,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let gamma = config.gamma;
    let noise_scale = (2.0 * gamma).sqrt();
    let mut u = x.clone();
    for j in 0..config.iterations {
        u = lmc_drift_step(potential, &u, x, rho, gamma).map_err(|e| match e {
            Error::NonFinite { step, .. } => Error::NonFinite { iteration: j, step },
            other => other,
        })?;
        let eps = DVector::from_fn(u.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        u += eps * noise_scale;
    }
    Ok(u)
}

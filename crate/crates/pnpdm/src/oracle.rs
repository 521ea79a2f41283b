//! Independent ground-truth posteriors for validation: closed-form
//! Gaussian and GMM conjugate posteriors, the analytic augmented joint
//! over (x, z), and a brute-force grid posterior for tiny nonlinear
//! problems.
//!
//! These deliberately use their own dense algebra (explicit symmetric
//! solves via Cholesky) rather than the sampler's cached decompositions.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_DENSE_DIM: usize = 4096;
const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPosterior {
    /// Per-pixel standard deviations (square roots of the diagonal).
    pub fn std(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.mean.len(),
            self.covariance.diagonal().iter().map(|v| v.sqrt()),
        )
    }
}

fn spd_inverse(matrix: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(matrix.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// Exact conjugate posterior for prior N(μ₀, Σ₀) and y = Ax + N(0, σ_y²I):
/// Σ_post = (Σ₀⁻¹ + AᵀA/σ_y²)⁻¹, μ_post = Σ_post(Σ₀⁻¹μ₀ + Aᵀy/σ_y²).
pub fn gaussian_posterior(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    a: &DMatrix<f64>,
    noise_sigma: f64,
    y: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let n = prior_mean.len();
    if n > MAX_DENSE_DIM {
        return Err(Error::InvalidParameter(format!(
            "oracle restricted to dense problems (n <= {MAX_DENSE_DIM}), got {n}"
        )));
    }
    if a.ncols() != n || a.nrows() != y.len() || prior_cov.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
            context: "gaussian_posterior",
        });
    }
    let prior_precision = spd_inverse(prior_cov, "prior covariance")?;
    let s2 = noise_sigma * noise_sigma;
    let precision = &prior_precision + a.transpose() * a / s2;
    let covariance = spd_inverse(&precision, "posterior precision")?;
    let rhs = &prior_precision * prior_mean + a.transpose() * y / s2;
    let mean = &covariance * rhs;
    Ok(GaussianPosterior { mean, covariance })
}

/// Posterior mixture for a GMM prior under the same linear-Gaussian
/// likelihood: component-wise conjugate updates with weights
/// w_i' ∝ w_i · N(y; Aμ_i, AΣ_iAᵀ + σ_y²I).
#[derive(Debug, Clone)]
pub struct GmmPosterior {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianPosterior>,
}

impl GmmPosterior {
    pub fn mean(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.components[0].mean.len());
        for (w, c) in self.weights.iter().zip(self.components.iter()) {
            out += &c.mean * *w;
        }
        out
    }
}

pub fn gmm_posterior(
    weights: &[f64],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    noise_sigma: f64,
    y: &DVector<f64>,
) -> Result<GmmPosterior> {
    if weights.len() != means.len() || weights.len() != covs.len() || weights.is_empty() {
        return Err(Error::InvalidParameter("mismatched mixture arrays".into()));
    }
    let s2 = noise_sigma * noise_sigma;
    let mut components = Vec::with_capacity(weights.len());
    let mut log_weights = Vec::with_capacity(weights.len());
    for ((w, mu), cov) in weights.iter().zip(means.iter()).zip(covs.iter()) {
        components.push(gaussian_posterior(mu, cov, a, noise_sigma, y)?);
        // log evidence: N(y; Aμ, AΣAᵀ + σ²I)
        let m = a.nrows();
        let pred_cov = a * cov * a.transpose() + DMatrix::identity(m, m) * s2;
        let chol = Cholesky::new(pred_cov)
            .ok_or_else(|| Error::Numerical("predictive covariance not SPD".into()))?;
        let diff = y - a * mu;
        let solved = chol.solve(&diff);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_ev = -0.5
            * (m as f64 * (2.0 * core::f64::consts::PI).ln() + logdet + diff.dot(&solved));
        log_weights.push(if *w > 0.0 { w.ln() + log_ev } else { f64::NEG_INFINITY });
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut new_weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = new_weights.iter().sum();
    for w in new_weights.iter_mut() {
        *w /= total;
    }
    Ok(GmmPosterior { weights: new_weights, components })
}

/// The augmented joint over stacked (x, z):
/// π(x, z) ∝ exp(−‖y − Az‖²/(2σ_y²) − g(x) − ‖x − z‖²/(2ρ²)), jointly
/// Gaussian for a Gaussian prior. Precision blocks: x-block Σ₀⁻¹ + ρ⁻²I,
/// z-block AᵀA/σ_y² + ρ⁻²I, cross-block −ρ⁻²I.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl JointGaussian {
    /// Marginal over the x coordinates (first n entries).
    pub fn x_marginal(&self, n: usize) -> GaussianPosterior {
        GaussianPosterior {
            mean: DVector::from_iterator(n, self.mean.iter().take(n).cloned()),
            covariance: self.covariance.view((0, 0), (n, n)).into(),
        }
    }
}

pub fn joint_pi_gaussian(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    a: &DMatrix<f64>,
    noise_sigma: f64,
    y: &DVector<f64>,
    rho: f64,
) -> Result<JointGaussian> {
    if rho <= 0.0 {
        return Err(Error::InvalidParameter("rho must be positive".into()));
    }
    let n = prior_mean.len();
    let s2 = noise_sigma * noise_sigma;
    let r2 = rho * rho;
    let prior_precision = spd_inverse(prior_cov, "prior covariance")?;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut precision = DMatrix::zeros(2 * n, 2 * n);
    precision
        .view_mut((0, 0), (n, n))
        .copy_from(&(&prior_precision + &eye / r2));
    precision
        .view_mut((n, n), (n, n))
        .copy_from(&(a.transpose() * a / s2 + &eye / r2));
    precision.view_mut((0, n), (n, n)).copy_from(&(-&eye / r2));
    precision.view_mut((n, 0), (n, n)).copy_from(&(-&eye / r2));

    let covariance = spd_inverse(&precision, "joint precision")?;
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(&(&prior_precision * prior_mean));
    rhs.rows_mut(n, n).copy_from(&(a.transpose() * y / s2));
    let mean = &covariance * rhs;
    Ok(JointGaussian { mean, covariance, precision })
}

/// Brute-force posterior on a regular grid for problems of dimension <= 2:
/// exp(−f(x) − g(x)) normalized by the trapezoid rule.
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

pub struct GridPosterior {
    spec: GridSpec,
    /// Normalized density values at the grid nodes.
    density: Vec<f64>,
    /// Trapezoid weight times cell volume for each node.
    weights: Vec<f64>,
}

impl GridPosterior {
    pub fn dim(&self) -> usize {
        self.spec.lo.len()
    }

    fn node(&self, flat: usize) -> Vec<f64> {
        match self.dim() {
            1 => {
                let h = (self.spec.hi[0] - self.spec.lo[0]) / (self.spec.points[0] - 1) as f64;
                vec![self.spec.lo[0] + flat as f64 * h]
            }
            2 => {
                let (n0, n1) = (self.spec.points[0], self.spec.points[1]);
                let _ = n0;
                let h0 = (self.spec.hi[0] - self.spec.lo[0]) / (self.spec.points[0] - 1) as f64;
                let h1 = (self.spec.hi[1] - self.spec.lo[1]) / (n1 - 1) as f64;
                let (i, j) = (flat / n1, flat % n1);
                vec![self.spec.lo[0] + i as f64 * h0, self.spec.lo[1] + j as f64 * h1]
            }
            _ => unreachable!("grid posterior limited to dim <= 2"),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (flat, (&p, &w)) in self.density.iter().zip(self.weights.iter()).enumerate() {
            let x = self.node(flat);
            for k in 0..d {
                out[k] += x[k] * p * w;
            }
        }
        out
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mean = self.mean();
        let mut out = DMatrix::zeros(d, d);
        for (flat, (&p, &w)) in self.density.iter().zip(self.weights.iter()).enumerate() {
            let x = self.node(flat);
            for r in 0..d {
                for c in 0..d {
                    out[(r, c)] += (x[r] - mean[r]) * (x[c] - mean[c]) * p * w;
                }
            }
        }
        out
    }

    /// Probability mass of the region selected by `predicate`.
    pub fn mass(&self, predicate: impl Fn(&[f64]) -> bool) -> f64 {
        self.density
            .iter()
            .zip(self.weights.iter())
            .enumerate()
            .filter(|(flat, _)| predicate(&self.node(*flat)))
            .map(|(_, (&p, &w))| p * w)
            .sum()
    }
}

/// Tabulate exp(−f(x) − g(x)) over the grid and normalize.
pub fn grid_posterior(
    likelihood_potential: impl Fn(&[f64]) -> f64,
    prior_potential: impl Fn(&[f64]) -> f64,
    spec: GridSpec,
) -> Result<GridPosterior> {
    let d = spec.lo.len();
    if d == 0 || d > 2 || spec.hi.len() != d || spec.points.len() != d {
        return Err(Error::InvalidParameter(
            "grid posterior supports dimensions 1 and 2".into(),
        ));
    }
    if spec.points.iter().any(|&p| p < 2) {
        return Err(Error::InvalidParameter("need at least 2 grid points per axis".into()));
    }
    let total: usize = spec.points.iter().product();
    if total > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge { points: total, limit: MAX_GRID_POINTS });
    }

    let steps: Vec<f64> = (0..d)
        .map(|k| (spec.hi[k] - spec.lo[k]) / (spec.points[k] - 1) as f64)
        .collect();
    let cell: f64 = steps.iter().product();

    let mut log_density = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let (x, edge_factor) = match d {
            1 => {
                let x = vec![spec.lo[0] + flat as f64 * steps[0]];
                let edge = if flat == 0 || flat == total - 1 { 0.5 } else { 1.0 };
                (x, edge)
            }
            _ => {
                let n1 = spec.points[1];
                let (i, j) = (flat / n1, flat % n1);
                let x = vec![spec.lo[0] + i as f64 * steps[0], spec.lo[1] + j as f64 * steps[1]];
                let ei = if i == 0 || i == spec.points[0] - 1 { 0.5 } else { 1.0 };
                let ej = if j == 0 || j == n1 - 1 { 0.5 } else { 1.0 };
                (x, ei * ej)
            }
        };
        log_density.push(-likelihood_potential(&x) - prior_potential(&x));
        weights.push(edge_factor * cell);
    }

    let max = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = log_density.iter().map(|l| (l - max).exp()).collect();
    let norm: f64 = density.iter().zip(weights.iter()).map(|(p, w)| p * w).sum();
    for p in density.iter_mut() {
        *p /= norm;
    }
    Ok(GridPosterior { spec, density, weights })
}

//! Likelihood potentials f(x; y) with gradients.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use super::linear::LinearOperator;
use super::nonlinear::ComplexLinear;

pub trait Potential: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn dim(&self) -> usize;
}

/// f(x; y) = ‖y − Ax‖² / (2σ_y²) for i.i.d. Gaussian noise.
pub struct LinearGaussianPotential {
    pub operator: Arc<dyn LinearOperator>,
    pub measurement: DVector<f64>,
    pub noise_sigma: f64,
}

impl LinearGaussianPotential {
    pub fn new(operator: Arc<dyn LinearOperator>, measurement: DVector<f64>, noise_sigma: f64) -> Self {
        assert_eq!(operator.output_dim(), measurement.len());
        assert!(noise_sigma > 0.0);
        Self { operator, measurement, noise_sigma }
    }
}

impl Potential for LinearGaussianPotential {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let residual = &self.measurement - self.operator.apply(x);
        residual.norm_squared() / (2.0 * self.noise_sigma * self.noise_sigma)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let residual = &self.measurement - self.operator.apply(x);
        -self.operator.adjoint(&residual) / (self.noise_sigma * self.noise_sigma)
    }

    fn dim(&self) -> usize {
        self.operator.input_dim()
    }
}

/// f(x; y) = ‖y − |Bx|‖² / (2σ_y²) for magnitude measurements.
///
/// At magnitude-zero coefficients the factor u/|u| uses the 0-subgradient
/// convention.
pub struct MagnitudePotential {
    pub model: Arc<dyn ComplexLinear>,
    pub measurement: DVector<f64>,
    pub noise_sigma: f64,
}

impl MagnitudePotential {
    pub fn new(model: Arc<dyn ComplexLinear>, measurement: DVector<f64>, noise_sigma: f64) -> Self {
        assert_eq!(model.output_dim(), measurement.len());
        assert!(noise_sigma > 0.0);
        Self { model, measurement, noise_sigma }
    }
}

impl Potential for MagnitudePotential {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mags = self.model.forward_magnitudes(x);
        (&self.measurement - mags).norm_squared() / (2.0 * self.noise_sigma * self.noise_sigma)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.model.forward_complex(x);
        let weighted: Vec<Complex64> = u
            .iter()
            .zip(self.measurement.iter())
            .map(|(&ui, &yi)| {
                let mag = ui.norm();
                if mag == 0.0 {
                    Complex64::default()
                } else {
                    ui / mag * (yi - mag)
                }
            })
            .collect();
        -self.model.adjoint_complex(&weighted) / (self.noise_sigma * self.noise_sigma)
    }

    fn dim(&self) -> usize {
        self.model.input_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{random_unit_mask, CdpModel, DenseOperator, FprModel};
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn finite_difference_check(pot: &dyn Potential, x: &DVector<f64>, tol: f64) {
        let g = pot.gradient(x);
        let h = 1e-6;
        let mut fd = DVector::zeros(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (pot.value(&xp) - pot.value(&xm)) / (2.0 * h);
        }
        let rel = (&g - &fd).norm() / fd.norm().max(1e-12);
        assert!(rel < tol, "gradient mismatch: rel err {rel}");
    }

    #[test]
    fn linear_potential_scalar_example() {
        // A=2, σ_y=1, y=6, x=1: f = ½(6−2)² = 8, grad = −2·(6−2) = −8
        let op = Arc::new(DenseOperator::new(DMatrix::from_element(1, 1, 2.0)).unwrap());
        let pot = LinearGaussianPotential::new(op, DVector::from_element(1, 6.0), 1.0);
        let x = DVector::from_element(1, 1.0);
        assert!((pot.value(&x) - 8.0).abs() < 1e-14);
        assert!((pot.gradient(&x)[0] + 8.0).abs() < 1e-14);
    }

    #[test]
    fn linear_potential_zero_residual() {
        let mut rng = StdRng::seed_from_u64(2);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let y = &a * &x;
        let pot = LinearGaussianPotential::new(Arc::new(DenseOperator::new(a).unwrap()), y, 0.5);
        assert!(pot.value(&x) < 1e-20);
        assert!(pot.gradient(&x).norm() < 1e-10);
    }

    #[test]
    fn magnitude_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        let (h, w) = (4usize, 4usize);
        let cdp: Arc<dyn ComplexLinear> =
            Arc::new(CdpModel::new(random_unit_mask(h * w, &mut rng), h, w).unwrap());
        let fpr: Arc<dyn ComplexLinear> = Arc::new(FprModel::new(h, w, 2).unwrap());
        for model in [cdp, fpr] {
            let truth = DVector::from_fn(h * w, |_, _| rng.gen_range(0.0..1.0f64));
            let y = model.forward_magnitudes(&truth).map(|m| m + 0.01 * rng.gen_range(-1.0..1.0));
            let pot = MagnitudePotential::new(model, y, 0.05);
            for _ in 0..20 {
                let x = DVector::from_fn(h * w, |_, _| rng.gen_range(-1.0..1.0f64));
                finite_difference_check(&pot, &x, 1e-5);
            }
        }
    }
}

//! Linear forward operators with adjoints and spectral structure.
//!
//! The spectral methods expose shifted normal-equation solves
//! (a·AᵀA + b·I)⁻¹ and their symmetric inverse square roots, which is what
//! the exact conjugate-Gaussian likelihood step needs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{to_complex, Fft2d};
use crate::image::ImageVector;

pub trait LinearOperator: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64>;

    /// (a·AᵀA + b·I)⁻¹ rhs, or `None` when no spectral structure exists.
    fn solve_shifted(&self, _rhs: &DVector<f64>, _a: f64, _b: f64) -> Option<DVector<f64>> {
        None
    }

    /// (a·AᵀA + b·I)^{-1/2} v (symmetric square root), or `None`.
    fn sqrt_inv_shifted(&self, _v: &DVector<f64>, _a: f64, _b: f64) -> Option<DVector<f64>> {
        None
    }

    fn has_spectral(&self) -> bool {
        let probe = DVector::zeros(self.input_dim());
        self.solve_shifted(&probe, 1.0, 1.0).is_some()
    }
}

/// Dense matrix with a cached thin SVD.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    u: DMatrix<f64>,
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() > 512 {
            log::warn!(
                "dense SVD of a {}x{} operator; consider a structured operator",
                matrix.nrows(),
                matrix.ncols()
            );
        }
        let svd = matrix.clone().svd(true, true);
        let (u, v_t) = (
            svd.u.ok_or_else(|| Error::Numerical("SVD failed to produce U".into()))?,
            svd.v_t.ok_or_else(|| Error::Numerical("SVD failed to produce Vᵀ".into()))?,
        );
        Ok(Self { matrix, u, singular_values: svd.singular_values, v_t })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// A rebuilt from U·S·Vᵀ, for spectral-consistency checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        us * &self.v_t
    }

    /// V f(S²) Vᵀ rhs + f(0)·(rhs − V Vᵀ rhs), for spectral functions f.
    fn apply_spectral_fn(&self, rhs: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let f0 = f(0.0);
        let mut coeffs = &self.v_t * rhs;
        for (c, &s) in coeffs.iter_mut().zip(self.singular_values.iter()) {
            *c *= f(s * s) - f0;
        }
        self.v_t.tr_mul(&coeffs) + rhs * f0
    }
}

impl LinearOperator for DenseOperator {
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }

    fn solve_shifted(&self, rhs: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        Some(self.apply_spectral_fn(rhs, |s2| 1.0 / (a * s2 + b)))
    }

    fn sqrt_inv_shifted(&self, v: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        Some(self.apply_spectral_fn(v, |s2| 1.0 / (a * s2 + b).sqrt()))
    }
}

/// Circular 2-D convolution, diagonal in the DFT basis.
///
/// Kernel centering convention: the kernel center sits at index
/// (⌊h/2⌋, ⌊w/2⌋) and is wrapped to the origin of the padded grid.
pub struct CirculantConv2d {
    height: usize,
    width: usize,
    /// Unnormalized DFT of the circularly shifted, zero-padded kernel.
    eigenvalues: Vec<Complex64>,
    fft: Fft2d,
}

impl CirculantConv2d {
    pub fn new(kernel: &ImageVector, height: usize, width: usize) -> Result<Self> {
        let (kh, kw) = (kernel.height(), kernel.width());
        if kh > height || kw > width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: kh * kw,
                context: "kernel larger than image",
            });
        }
        let mut padded = vec![Complex64::default(); height * width];
        let (ch, cw) = (kh / 2, kw / 2);
        for i in 0..kh {
            for j in 0..kw {
                let ii = (i + height - ch) % height;
                let jj = (j + width - cw) % width;
                padded[ii * width + jj] = Complex64::new(kernel.get(i, j), 0.0);
            }
        }
        let fft = Fft2d::new(height, width);
        fft.forward(&mut padded);
        let scale = ((height * width) as f64).sqrt();
        for v in padded.iter_mut() {
            *v *= scale;
        }
        Ok(Self { height, width, eigenvalues: padded, fft })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    fn pointwise(&self, x: &DVector<f64>, f: impl Fn(Complex64) -> Complex64) -> DVector<f64> {
        let mut buf = to_complex(x.as_slice());
        self.fft.forward(&mut buf);
        for (v, &lam) in buf.iter_mut().zip(self.eigenvalues.iter()) {
            *v = f(lam) * *v;
        }
        self.fft.inverse(&mut buf);
        DVector::from_iterator(buf.len(), buf.into_iter().map(|c| c.re))
    }
}

impl LinearOperator for CirculantConv2d {
    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn output_dim(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.pointwise(x, |lam| lam)
    }

    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.pointwise(y, |lam| lam.conj())
    }

    fn solve_shifted(&self, rhs: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        Some(self.pointwise(rhs, |lam| Complex64::new(1.0 / (a * lam.norm_sqr() + b), 0.0)))
    }

    fn sqrt_inv_shifted(&self, v: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        Some(self.pointwise(v, |lam| {
            Complex64::new(1.0 / (a * lam.norm_sqr() + b).sqrt(), 0.0)
        }))
    }
}

/// f×f block averaging (super-resolution forward model).
///
/// AᵀA is (1/f²)·M with M the orthogonal projection onto block-constant
/// images, so shifted solves split into the block-mean component and its
/// complement.
pub struct BlockDownsample {
    height: usize,
    width: usize,
    factor: usize,
}

impl BlockDownsample {
    pub fn new(height: usize, width: usize, factor: usize) -> Result<Self> {
        if factor == 0 || height % factor != 0 || width % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "factor {factor} must divide both image dims {height}x{width}"
            )));
        }
        Ok(Self { height, width, factor })
    }

    /// Broadcasts each block's mean back onto the block.
    fn block_mean_projection(&self, x: &DVector<f64>) -> DVector<f64> {
        let f = self.factor;
        let mut out = DVector::zeros(x.len());
        for bi in 0..self.height / f {
            for bj in 0..self.width / f {
                let mut sum = 0.0;
                for di in 0..f {
                    for dj in 0..f {
                        sum += x[(bi * f + di) * self.width + bj * f + dj];
                    }
                }
                let mean = sum / (f * f) as f64;
                for di in 0..f {
                    for dj in 0..f {
                        out[(bi * f + di) * self.width + bj * f + dj] = mean;
                    }
                }
            }
        }
        out
    }
}

impl LinearOperator for BlockDownsample {
    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn output_dim(&self) -> usize {
        (self.height / self.factor) * (self.width / self.factor)
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let f = self.factor;
        let (oh, ow) = (self.height / f, self.width / f);
        let mut out = DVector::zeros(oh * ow);
        for bi in 0..oh {
            for bj in 0..ow {
                let mut sum = 0.0;
                for di in 0..f {
                    for dj in 0..f {
                        sum += x[(bi * f + di) * self.width + bj * f + dj];
                    }
                }
                out[bi * ow + bj] = sum / (f * f) as f64;
            }
        }
        out
    }

    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let f = self.factor;
        let (oh, ow) = (self.height / f, self.width / f);
        let mut out = DVector::zeros(self.height * self.width);
        for bi in 0..oh {
            for bj in 0..ow {
                let v = y[bi * ow + bj] / (f * f) as f64;
                for di in 0..f {
                    for dj in 0..f {
                        out[(bi * f + di) * self.width + bj * f + dj] = v;
                    }
                }
            }
        }
        out
    }

    fn solve_shifted(&self, rhs: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        let f2 = (self.factor * self.factor) as f64;
        let mean_part = self.block_mean_projection(rhs);
        let residual = rhs - &mean_part;
        Some(mean_part / (a / f2 + b) + residual / b)
    }

    fn sqrt_inv_shifted(&self, v: &DVector<f64>, a: f64, b: f64) -> Option<DVector<f64>> {
        let f2 = (self.factor * self.factor) as f64;
        let mean_part = self.block_mean_projection(v);
        let residual = v - &mean_part;
        Some(mean_part / (a / f2 + b).sqrt() + residual / b.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn adjoint_test(op: &dyn LinearOperator, rng: &mut StdRng) {
        for _ in 0..100 {
            let x = random_vec(rng, op.input_dim());
            let u = random_vec(rng, op.output_dim());
            let lhs = op.apply(&x).dot(&u);
            let rhs = x.dot(&op.adjoint(&u));
            assert!(
                (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
                "adjoint identity violated: {lhs} vs {rhs}"
            );
        }
    }

    fn shifted_solve_test(op: &dyn LinearOperator, rng: &mut StdRng) {
        // (a AᵀA + bI)·solve_shifted(rhs) should give back rhs, and
        // sqrt_inv applied twice should match solve.
        let (a, b) = (3.7, 0.9);
        let rhs = random_vec(rng, op.input_dim());
        let sol = op.solve_shifted(&rhs, a, b).unwrap();
        let back = op.adjoint(&op.apply(&sol)) * a + &sol * b;
        assert!((back - &rhs).norm() < 1e-9 * rhs.norm());
        let half = op.sqrt_inv_shifted(&rhs, a, b).unwrap();
        let twice = op.sqrt_inv_shifted(&half, a, b).unwrap();
        assert!((twice - &sol).norm() < 1e-9 * sol.norm());
    }

    #[test]
    fn dense_operator_spectral() {
        let mut rng = StdRng::seed_from_u64(11);
        for (m, n) in [(6usize, 10usize), (10, 6), (8, 8)] {
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let op = DenseOperator::new(a.clone()).unwrap();
            adjoint_test(&op, &mut rng);
            shifted_solve_test(&op, &mut rng);
            // apply reconstructed from the decomposition matches direct apply
            assert!((op.reconstruct() - &a).abs().max() < 1e-10);
        }
    }

    #[test]
    fn circ_conv_identity_kernel() {
        let kernel = ImageVector::from_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 3, 3)
            .unwrap();
        let op = CirculantConv2d::new(&kernel, 4, 4).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let x = random_vec(&mut rng, 16);
        assert!((op.apply(&x) - &x).norm() < 1e-12);
    }

    #[test]
    fn circ_conv_dc_response() {
        let kernel = ImageVector::from_slice(&[0.25, 0.5, 0.125, 0.125], 2, 2).unwrap();
        let op = CirculantConv2d::new(&kernel, 4, 4).unwrap();
        let c = 3.0;
        let x = DVector::from_element(16, c);
        let y = op.apply(&x);
        for v in y.iter() {
            assert!((v - c * 1.0).abs() < 1e-12); // kernel sums to 1
        }
    }

    #[test]
    fn circ_conv_matches_direct_circular_sum() {
        // brute-force O(n²) circular convolution oracle
        let mut rng = StdRng::seed_from_u64(42);
        let (h, w) = (4usize, 4usize);
        let kdata: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kernel = ImageVector::from_slice(&kdata, 3, 3).unwrap();
        let op = CirculantConv2d::new(&kernel, h, w).unwrap();
        let x = random_vec(&mut rng, h * w);
        let y = op.apply(&x);
        let (ch, cw) = (1usize, 1usize); // center of a 3x3 kernel
        for oi in 0..h {
            for oj in 0..w {
                let mut acc = 0.0;
                for ki in 0..3 {
                    for kj in 0..3 {
                        let si = (oi + h + ch - ki) % h;
                        let sj = (oj + w + cw - kj) % w;
                        acc += kernel.get(ki, kj) * x[si * w + sj];
                    }
                }
                assert!(
                    (y[oi * w + oj] - acc).abs() < 1e-12,
                    "mismatch at ({oi},{oj}): {} vs {acc}",
                    y[oi * w + oj]
                );
            }
        }
    }

    #[test]
    fn circ_conv_adjoint_and_spectral() {
        let mut rng = StdRng::seed_from_u64(7);
        let kdata: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kernel = ImageVector::from_slice(&kdata, 3, 3).unwrap();
        let op = CirculantConv2d::new(&kernel, 8, 8).unwrap();
        adjoint_test(&op, &mut rng);
        shifted_solve_test(&op, &mut rng);
    }

    #[test]
    fn circ_conv_rejects_oversized_kernel() {
        let kernel = ImageVector::zeros(5, 5);
        assert!(CirculantConv2d::new(&kernel, 4, 4).is_err());
    }

    #[test]
    fn block_downsample_examples() {
        // f = 1 is the identity
        let id = BlockDownsample::new(2, 2, 1).unwrap();
        let x = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(id.apply(&x), x);

        // 1-D analogue of block means [0,2,4,6] -> [1,5] via duplicated rows
        let op = BlockDownsample::new(2, 4, 2).unwrap();
        let x2 = DVector::from_row_slice(&[0.0, 2.0, 4.0, 6.0, 0.0, 2.0, 4.0, 6.0]);
        let y = op.apply(&x2);
        assert_eq!(y.as_slice(), &[1.0, 5.0]);
    }

    #[test]
    fn block_downsample_divisibility() {
        assert!(BlockDownsample::new(6, 6, 4).is_err());
        assert!(BlockDownsample::new(8, 8, 4).is_ok());
    }

    #[test]
    fn block_downsample_adjoint_and_spectral() {
        let mut rng = StdRng::seed_from_u64(19);
        let op = BlockDownsample::new(8, 8, 4).unwrap();
        adjoint_test(&op, &mut rng);
        shifted_solve_test(&op, &mut rng);
    }
}

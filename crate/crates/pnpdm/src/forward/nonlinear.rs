//! Magnitude measurement models: coded diffraction patterns and Fourier
//! phase retrieval.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::image::ImageVector;

/// A complex linear map B with real input; magnitude models measure |Bx|.
pub trait ComplexLinear: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward_complex(&self, x: &DVector<f64>) -> Vec<Complex64>;
    /// Real part of Bᴴv.
    fn adjoint_complex(&self, v: &[Complex64]) -> DVector<f64>;

    fn forward_magnitudes(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.forward_complex(x);
        DVector::from_iterator(u.len(), u.iter().map(|c| c.norm()))
    }
}

/// Unit-modulus phase mask entries, phases i.i.d. uniform on [0, 2π).
pub fn random_unit_mask(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..core::f64::consts::TAU)))
        .collect()
}

/// Coded diffraction patterns: y-mean = |F D x| with a unit-modulus
/// diagonal mask D and the unitary 2-D DFT F.
pub struct CdpModel {
    height: usize,
    width: usize,
    mask: Vec<Complex64>,
    fft: Fft2d,
}

impl CdpModel {
    pub fn new(mask: Vec<Complex64>, height: usize, width: usize) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: mask.len(),
                context: "CdpModel mask",
            });
        }
        if mask.iter().any(|m| (m.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidParameter(
                "CDP mask entries must have unit modulus".into(),
            ));
        }
        Ok(Self { height, width, mask, fft: Fft2d::new(height, width) })
    }

    pub fn mask(&self) -> &[Complex64] {
        &self.mask
    }
}

impl ComplexLinear for CdpModel {
    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn output_dim(&self) -> usize {
        self.height * self.width
    }

    fn forward_complex(&self, x: &DVector<f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(self.mask.iter())
            .map(|(&xi, &m)| m * xi)
            .collect();
        self.fft.forward(&mut buf);
        buf
    }

    fn adjoint_complex(&self, v: &[Complex64]) -> DVector<f64> {
        let mut buf = v.to_vec();
        self.fft.inverse(&mut buf);
        DVector::from_iterator(
            buf.len(),
            buf.iter().zip(self.mask.iter()).map(|(c, m)| (m.conj() * c).re),
        )
    }
}

/// Fourier phase retrieval: y-mean = |F P x| where P zero-pads the image
/// by `pad_factor` per axis.
pub struct FprModel {
    height: usize,
    width: usize,
    pad_factor: usize,
    fft: Fft2d,
}

impl FprModel {
    pub fn new(height: usize, width: usize, pad_factor: usize) -> Result<Self> {
        if pad_factor < 1 {
            return Err(Error::InvalidParameter("pad_factor must be >= 1".into()));
        }
        Ok(Self {
            height,
            width,
            pad_factor,
            fft: Fft2d::new(height * pad_factor, width * pad_factor),
        })
    }

    fn padded_width(&self) -> usize {
        self.width * self.pad_factor
    }
}

impl ComplexLinear for FprModel {
    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn output_dim(&self) -> usize {
        self.height * self.width * self.pad_factor * self.pad_factor
    }

    fn forward_complex(&self, x: &DVector<f64>) -> Vec<Complex64> {
        let pw = self.padded_width();
        let mut buf = vec![Complex64::default(); self.output_dim()];
        for i in 0..self.height {
            for j in 0..self.width {
                buf[i * pw + j] = Complex64::new(x[i * self.width + j], 0.0);
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    fn adjoint_complex(&self, v: &[Complex64]) -> DVector<f64> {
        let mut buf = v.to_vec();
        self.fft.inverse(&mut buf);
        let pw = self.padded_width();
        let mut out = DVector::zeros(self.input_dim());
        for i in 0..self.height {
            for j in 0..self.width {
                out[i * self.width + j] = buf[i * pw + j].re;
            }
        }
        out
    }
}

/// |F D x| of an image (helper mirroring the measurement contract).
pub fn cdp_forward(model: &CdpModel, x: &ImageVector) -> DVector<f64> {
    model.forward_magnitudes(x.vector())
}

/// |F P x| of an image.
pub fn fpr_forward(model: &FprModel, x: &ImageVector) -> DVector<f64> {
    model.forward_magnitudes(x.vector())
}

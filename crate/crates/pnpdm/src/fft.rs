//! Unitary 2-D FFT helper over row-major buffers.
//!
//! Normalization is 1/√n per transform so that the transform is unitary:
//! Parseval holds exactly and the adjoint equals the inverse.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft2d {
    height: usize,
    width: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            fwd_rows: planner.plan_fft_forward(width),
            fwd_cols: planner.plan_fft_forward(height),
            inv_rows: planner.plan_fft_inverse(width),
            inv_cols: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    fn transform(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "Fft2d buffer size");
        for row in data.chunks_exact_mut(self.width) {
            rows.process(row);
        }
        if self.height > 1 {
            let mut col = vec![Complex64::default(); self.height];
            for j in 0..self.width {
                for i in 0..self.height {
                    col[i] = data[i * self.width + j];
                }
                cols.process(&mut col);
                for i in 0..self.height {
                    data[i * self.width + j] = col[i];
                }
            }
        }
        let scale = 1.0 / (self.len() as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd_rows, &self.fwd_cols);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv_rows, &self.inv_cols);
    }
}

pub fn to_complex(real: &[f64]) -> Vec<Complex64> {
    real.iter().map(|&r| Complex64::new(r, 0.0)).collect()
}

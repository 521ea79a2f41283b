//! Flat real-valued signals with shape metadata.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A real-valued signal stored flat in row-major order together with its
/// 2-D shape. 1-D signals use `width == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVector {
    data: DVector<f64>,
    height: usize,
    width: usize,
}

impl ImageVector {
    pub fn new(data: DVector<f64>, height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: data.len(),
                context: "ImageVector::new",
            });
        }
        Ok(Self { data, height, width })
    }

    pub fn from_slice(data: &[f64], height: usize, width: usize) -> Result<Self> {
        Self::new(DVector::from_row_slice(data), height, width)
    }

    pub fn flat(data: DVector<f64>) -> Self {
        let n = data.len();
        Self { data, height: n, width: 1 }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { data: DVector::zeros(height * width), height, width }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// 180° rotation: reverses both axes. Fourier magnitudes of the
    /// zero-padded image are invariant under this map.
    pub fn rotate180(&self) -> Self {
        let mut out = DVector::zeros(self.data.len());
        for i in 0..self.height {
            for j in 0..self.width {
                out[(self.height - 1 - i) * self.width + (self.width - 1 - j)] =
                    self.data[i * self.width + j];
            }
        }
        Self { data: out, height: self.height, width: self.width }
    }
}

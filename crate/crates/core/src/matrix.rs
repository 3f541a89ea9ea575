//! Dense row-major float matrices.
//!
//! Activations are stored column-per-token: an `n x m` matrix holds `m`
//! input vectors of length `n`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FloatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        FloatMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FloatMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Largest absolute row sum, the induced infinity norm.
    pub fn row_sum_norm(&self) -> f64 {
        self.data
            .chunks(self.cols.max(1))
            .map(|row| row.iter().map(|v| v.abs() as f64).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `self * rhs` with f64 accumulation, returned in f64.
    pub fn matmul_f64(&self, rhs: &FloatMatrix) -> Vec<f64> {
        assert_eq!(self.cols, rhs.rows, "matmul dims");
        let mut out = vec![0.0f64; self.rows * rhs.cols];
        for i in 0..self.rows {
            let orow = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k] as f64;
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * *b as f64;
                }
            }
        }
        out
    }

    /// `self * rhs` accumulated in f64 and rounded once to f32.
    pub fn matmul(&self, rhs: &FloatMatrix) -> FloatMatrix {
        let data = self.matmul_f64(rhs).into_iter().map(|v| v as f32).collect();
        FloatMatrix::new(self.rows, rhs.cols, data)
    }

    pub fn relu_in_place(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

//! Float to fixed-point conversion and the exact integer LoRA delta.
//!
//! Weights and activations live at scale `S = 2^f` (`scale_exp = 1`); the delta
//! `B_q·A_q·X_q` is the exact integer product and therefore lives at `S^3`.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::matrix::FloatMatrix;

/// Serialization ceiling for any quantized entry.
pub const ENTRY_LIMIT: i64 = 1 << 62;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum QuantError {
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("quantized magnitude exceeds 2^62 at index {0}")]
    Overflow(usize),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<i64>,
    pub scale_exp: u32,
}

impl QuantizedMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<i64>, scale_exp: u32) -> Self {
        assert_eq!(entries.len(), rows * cols, "entries length");
        QuantizedMatrix { rows, cols, entries, scale_exp }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.entries[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs(&self) -> u64 {
        self.entries.iter().map(|e| e.unsigned_abs()).max().unwrap_or(0)
    }
}

/// `2^-e` as an exact f32 (normal range only).
fn pow2_neg_f32(e: u32) -> f32 {
    assert!(e < 126, "scale exponent out of f32 normal range");
    f32::from_bits((127 - e) << 23)
}

/// `round_half_even(value * 2^f)` entrywise.
pub fn quantize(m: &FloatMatrix, scale_bits: u32) -> Result<QuantizedMatrix, QuantError> {
    let scale = (1u64 << scale_bits) as f64;
    let entries = m
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(QuantError::NonFinite(i));
            }
            // f32 -> f64 and the power-of-two product are both exact.
            let q = (v as f64 * scale).round_ties_even();
            if q.abs() >= ENTRY_LIMIT as f64 {
                return Err(QuantError::Overflow(i));
            }
            Ok(q as i64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantizedMatrix::new(m.rows, m.cols, entries, 1))
}

/// `entry / 2^(f * scale_exp)`, rounded to the nearest f32.
pub fn dequantize(q: &QuantizedMatrix, scale_bits: u32) -> FloatMatrix {
    let factor = pow2_neg_f32(scale_bits * q.scale_exp);
    // i64 -> f32 rounds to nearest; the power-of-two scaling is exact.
    let data = q.entries.iter().map(|&e| e as f32 * factor).collect();
    FloatMatrix::new(q.rows, q.cols, data)
}

/// `B_q · (A_q · X_q)` in checked 128-bit arithmetic, at scale exponent 3.
pub fn delta_exact(
    a: &QuantizedMatrix,
    b: &QuantizedMatrix,
    x: &QuantizedMatrix,
) -> Result<QuantizedMatrix, QuantError> {
    let (r, n) = (a.rows, a.cols);
    let (d, m) = (b.rows, x.cols);
    if b.cols != r || x.rows != n {
        return Err(QuantError::DimMismatch(format!(
            "A {}x{}, B {}x{}, X {}x{}",
            a.rows, a.cols, b.rows, b.cols, x.rows, x.cols
        )));
    }
    let mut v = vec![0i128; r * m];
    for i in 0..r {
        let out = &mut v[i * m..(i + 1) * m];
        for k in 0..n {
            let aik = a.get(i, k) as i128;
            if aik == 0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                let t = aik.checked_mul(x.get(k, j) as i128).ok_or(QuantError::Overflow(i))?;
                *o = o.checked_add(t).ok_or(QuantError::Overflow(i))?;
            }
        }
    }
    let mut delta = Vec::with_capacity(d * m);
    for i in 0..d {
        for j in 0..m {
            let mut acc = 0i128;
            for k in 0..r {
                let t = (b.get(i, k) as i128)
                    .checked_mul(v[k * m + j])
                    .ok_or(QuantError::Overflow(i * m + j))?;
                acc = acc.checked_add(t).ok_or(QuantError::Overflow(i * m + j))?;
            }
            if acc.unsigned_abs() >= ENTRY_LIMIT as u128 {
                return Err(QuantError::Overflow(i * m + j));
            }
            delta.push(acc as i64);
        }
    }
    Ok(QuantizedMatrix::new(d, m, delta, 3))
}

/// Worst-case integer magnitudes for one module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverflowCheck {
    /// `r · maxB · (n · maxA · maxX)`.
    pub bound: BigUint,
    /// `(p - 1) / 2`.
    pub limit: BigUint,
}

impl OverflowCheck {
    pub fn is_ok(&self) -> bool {
        self.bound <= self.limit
    }

    /// True when the delta also fits the 2^62 serialization ceiling.
    pub fn fits_entry_limit(&self) -> bool {
        self.bound < BigUint::from(ENTRY_LIMIT as u64)
    }
}

/// Bounds `|Δ_q|` from the dimensions and operand magnitudes; the violation is
/// returned as a value rather than an error.
pub fn overflow_check(n: usize, r: usize, max_a: u64, max_b: u64, max_x: u64, p: &BigUint) -> OverflowCheck {
    let inner = BigUint::from(n) * max_a * max_x;
    let bound = BigUint::from(r) * max_b * inner;
    OverflowCheck { bound, limit: (p - 1u32) >> 1 }
}

/// Analytic bound on `‖dequantize(Δ_q) − B·A·X‖_∞` from interval propagation
/// with per-entry rounding error `ε = 2^(−f−1)`.
pub fn quantization_error_bound(max_a: f64, max_b: f64, max_x: f64, n: usize, r: usize, scale_bits: u32) -> f64 {
    let eps = (-(scale_bits as f64) - 1.0).exp2();
    let (n, r) = (n as f64, r as f64);
    let e_v = n * (max_a * eps + max_x * eps + eps * eps);
    let max_v = n * max_a * max_x;
    r * (max_b * e_v + max_v * eps + eps * e_v)
}

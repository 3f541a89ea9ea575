//! What unbounded openings would leak: `rank` independent combinations `sᵀA`
//! determine `A` completely. Used to demonstrate why the budget exists.

use super::LoraProof;
use crate::field::{DeploymentProfile, FieldElement};
use crate::tensorio::LoraModule;

/// Solves `S·M = W` for `M` by Gauss-Jordan elimination over the field, where
/// `S` is `k x k` (rows are coefficient vectors) and `W` is `k x cols`.
/// Returns `None` if `S` is singular.
pub fn solve_left(coeffs: &[Vec<FieldElement>], openings: &[Vec<FieldElement>]) -> Option<Vec<Vec<FieldElement>>> {
    let k = coeffs.len();
    if openings.len() != k || coeffs.iter().any(|row| row.len() != k) {
        return None;
    }
    let mut s: Vec<Vec<FieldElement>> = coeffs.to_vec();
    let mut w: Vec<Vec<FieldElement>> = openings.to_vec();
    for col in 0..k {
        let pivot = (col..k).find(|&i| !s[i][col].is_zero())?;
        s.swap(col, pivot);
        w.swap(col, pivot);
        let inv = s[col][col].invert()?;
        for v in s[col].iter_mut() {
            *v = *v * inv;
        }
        for v in w[col].iter_mut() {
            *v = *v * inv;
        }
        for i in 0..k {
            if i == col || s[i][col].is_zero() {
                continue;
            }
            let f = s[i][col];
            let (srow, wrow) = (s[col].clone(), w[col].clone());
            for (a, b) in s[i].iter_mut().zip(&srow) {
                *a = *a - f * *b;
            }
            for (a, b) in w[i].iter_mut().zip(&wrow) {
                *a = *a - f * *b;
            }
        }
    }
    Some(w)
}

/// Recovers the integer rows of a committed matrix from `rows` openings
/// `(s_k, s_kᵀM)`.
pub fn reconstruct_rows(coeffs: &[Vec<FieldElement>], openings: &[Vec<FieldElement>]) -> Option<Vec<Vec<i64>>> {
    let m = solve_left(coeffs, openings)?;
    m.into_iter()
        .map(|row| {
            row.iter()
                .map(|e| i64::try_from(crate::field::fe_to_signed(e)).ok())
                .collect::<Option<Vec<i64>>>()
        })
        .collect()
}

/// The coefficients `s` that a proof's `A` opening combines rows with,
/// recomputed from public data alone.
pub fn opening_coefficients(profile: &DeploymentProfile, proof: &LoraProof, module: &LoraModule) -> Vec<FieldElement> {
    let t = super::prover::bound_transcript(profile, &proof.header, module);
    super::prover::derive_challenges(t, &proof.header, |_| proof.v.clone()).0.s
}

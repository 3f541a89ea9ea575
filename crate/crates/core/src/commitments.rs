//! Row-wise Pedersen vector commitments to quantized weight matrices.
//!
//! Row `i` of `M` is committed as `C_i = h^{ρ_i} · ∏_j g_j^{M_ij}`. Because the
//! scheme is additively homomorphic, `∏_i C_i^{s_i}` commits to `sᵀM` under the
//! blinder `Σ s_i ρ_i`, which is what the verifier opens.

use std::fmt;

use curve25519_dalek::ristretto::{RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};

use crate::field::{derive_generators, multiscalar_mul, DeploymentProfile, FieldElement, FieldError, GroupElement};
use crate::quantizer::QuantizedMatrix;

/// Generator label shared by every module under one profile.
pub const PEDERSEN_LABEL: &[u8] = b"zklora/pedersen";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CommitError {
    #[error("row of length {cols} exceeds key length {key_len}")]
    RowTooLong { cols: usize, key_len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("malformed commitment encoding: {0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Generators `g_0..g_{L-1}` and blinding generator `h`.
#[derive(Clone)]
pub struct PedersenKey {
    generators: Vec<GroupElement>,
    blinding: GroupElement,
    blinding_table: RistrettoBasepointTable,
}

impl fmt::Debug for PedersenKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PedersenKey").field("len", &self.generators.len()).field("blinding", &self.blinding).finish()
    }
}

impl PedersenKey {
    pub fn derive(profile: &DeploymentProfile, len: usize) -> Self {
        let g = derive_generators(profile, PEDERSEN_LABEL, len.max(1));
        let blinding_table = RistrettoBasepointTable::create(g.blinding.point());
        PedersenKey { generators: g.generators, blinding: g.blinding, blinding_table }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn blinding(&self) -> GroupElement {
        self.blinding
    }

    fn blind(&self, rho: &FieldElement) -> RistrettoPoint {
        &self.blinding_table * rho.scalar()
    }

    /// `h^ρ · ∏ g_j^{v_j}` for a small-integer vector.
    pub fn commit_vector(&self, values: &[i64], rho: &FieldElement) -> Result<GroupElement, CommitError> {
        if values.len() > self.len() {
            return Err(CommitError::RowTooLong { cols: values.len(), key_len: self.len() });
        }
        let points: Vec<RistrettoPoint> = self.generators[..values.len()].iter().map(|g| *g.point()).collect();
        Ok(GroupElement::from_point(small_msm(&points, values) + self.blind(rho)))
    }
}

/// `Σ scalars[i] · points[i]` for signed 64-bit scalars.
///
/// Bucket method over signed base-`2^c` digits; the cost scales with the bit
/// length of the largest scalar instead of the 253-bit field size.
pub fn small_msm(points: &[RistrettoPoint], scalars: &[i64]) -> RistrettoPoint {
    assert_eq!(points.len(), scalars.len(), "small_msm length mismatch");
    let n = points.len();
    let max = scalars.iter().map(|s| s.unsigned_abs()).max().unwrap_or(0);
    if max == 0 {
        return RistrettoPoint::identity();
    }
    let c: u32 = match n {
        0..=7 => 2,
        8..=31 => 3,
        32..=127 => 4,
        128..=511 => 5,
        512..=2047 => 6,
        _ => 7,
    };
    let bits = 64 - max.leading_zeros();
    // one spare bit absorbs the final carry of the signed recoding
    let windows = (bits + c).div_ceil(c) as usize;
    let radix = 1i64 << c;
    let half = radix >> 1;

    let mut digits = vec![0i32; windows * n];
    for (i, &s) in scalars.iter().enumerate() {
        let mut k = s.unsigned_abs() as i128;
        for w in 0..windows {
            let mut d = (k & (radix as i128 - 1)) as i64;
            k >>= c;
            if d >= half {
                d -= radix;
                k += 1;
            }
            digits[w * n + i] = if s < 0 { -d as i32 } else { d as i32 };
        }
        debug_assert_eq!(k, 0);
    }

    let mut acc = RistrettoPoint::identity();
    let mut buckets = vec![RistrettoPoint::identity(); half as usize];
    for w in (0..windows).rev() {
        for _ in 0..c {
            acc = acc + acc;
        }
        buckets.iter_mut().for_each(|b| *b = RistrettoPoint::identity());
        let mut touched = false;
        for (i, p) in points.iter().enumerate() {
            let d = digits[w * n + i];
            if d > 0 {
                buckets[d as usize - 1] += p;
                touched = true;
            } else if d < 0 {
                buckets[(-d) as usize - 1] -= p;
                touched = true;
            }
        }
        if !touched {
            continue;
        }
        // Σ (j+1)·bucket_j via running sums
        let mut running = RistrettoPoint::identity();
        let mut sum = RistrettoPoint::identity();
        for b in buckets.iter().rev() {
            running += b;
            sum += running;
        }
        acc += sum;
    }
    acc
}

/// Public half of a [`CommitmentSet`]: the shape and one group element per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicCommitments {
    pub rows: u32,
    pub cols: u32,
    pub commitments: Vec<GroupElement>,
}

impl PublicCommitments {
    /// `rows u32 BE ‖ cols u32 BE ‖ C_1 ‖ … ‖ C_rows`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 * self.commitments.len());
        out.extend_from_slice(&self.rows.to_be_bytes());
        out.extend_from_slice(&self.cols.to_be_bytes());
        for c in &self.commitments {
            out.extend_from_slice(&c.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CommitError> {
        if bytes.len() < 8 {
            return Err(CommitError::Malformed("truncated shape".into()));
        }
        let rows = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let cols = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        let body = &bytes[8..];
        if body.len() as u64 != rows as u64 * 32 {
            return Err(CommitError::Malformed(format!("{} bytes for {rows} commitments", body.len())));
        }
        let commitments = body.chunks_exact(32).map(GroupElement::from_bytes).collect::<Result<_, _>>()?;
        Ok(PublicCommitments { rows, cols, commitments })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, CommitError> {
        Self::from_bytes(&hex::decode(s).map_err(|e| CommitError::Malformed(e.to_string()))?)
    }

    pub fn digest(&self) -> [u8; 32] {
        crate::sha256(&self.to_bytes())
    }
}

/// Row commitments plus the prover-held blinders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitmentSet {
    pub public: PublicCommitments,
    pub blinders: Vec<FieldElement>,
}

impl CommitmentSet {
    pub fn public(&self) -> &PublicCommitments {
        &self.public
    }
}

/// An opened row combination `(w, ρ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening {
    pub w: Vec<FieldElement>,
    pub blind: FieldElement,
}

/// Commits each row of `m` under a fresh uniform blinder.
pub fn commit_rows<R: RngCore + CryptoRng>(
    m: &QuantizedMatrix,
    key: &PedersenKey,
    rng: &mut R,
) -> Result<CommitmentSet, CommitError> {
    let blinders: Vec<FieldElement> = (0..m.rows).map(|_| FieldElement::random(rng)).collect();
    commit_rows_with_blinders(m, key, blinders)
}

/// Commits with caller-supplied blinders (restoring a persisted set).
pub fn commit_rows_with_blinders(
    m: &QuantizedMatrix,
    key: &PedersenKey,
    blinders: Vec<FieldElement>,
) -> Result<CommitmentSet, CommitError> {
    if m.cols > key.len() {
        return Err(CommitError::RowTooLong { cols: m.cols, key_len: key.len() });
    }
    if blinders.len() != m.rows {
        return Err(CommitError::LengthMismatch { expected: m.rows, got: blinders.len() });
    }
    let points: Vec<RistrettoPoint> = key.generators[..m.cols].iter().map(|g| *g.point()).collect();
    let commitments = (0..m.rows)
        .map(|i| GroupElement::from_point(small_msm(&points, m.row(i)) + key.blind(&blinders[i])))
        .collect();
    Ok(CommitmentSet {
        public: PublicCommitments { rows: m.rows as u32, cols: m.cols as u32, commitments },
        blinders,
    })
}

/// `∏ C_i^{s_i}`.
pub fn combine(commits: &[GroupElement], coeffs: &[FieldElement]) -> Result<GroupElement, CommitError> {
    if commits.len() != coeffs.len() {
        return Err(CommitError::LengthMismatch { expected: commits.len(), got: coeffs.len() });
    }
    Ok(multiscalar_mul(coeffs, commits))
}

/// `w = sᵀM` over the field and `ρ = Σ s_i ρ_i`.
pub fn open_combination(m: &QuantizedMatrix, blinders: &[FieldElement], s: &[FieldElement]) -> Result<Opening, CommitError> {
    if s.len() != m.rows {
        return Err(CommitError::LengthMismatch { expected: m.rows, got: s.len() });
    }
    if blinders.len() != m.rows {
        return Err(CommitError::LengthMismatch { expected: m.rows, got: blinders.len() });
    }
    let mut w = vec![FieldElement::ZERO; m.cols];
    for (i, si) in s.iter().enumerate() {
        if si.is_zero() {
            continue;
        }
        for (wj, &mij) in w.iter_mut().zip(m.row(i)) {
            if mij != 0 {
                *wj += *si * FieldElement::from_i64(mij);
            }
        }
    }
    let blind = s.iter().zip(blinders).map(|(a, b)| *a * *b).sum();
    Ok(Opening { w, blind })
}

/// True iff `h^ρ · ∏ g_j^{w_j}` equals `combined`.
pub fn verify_opening(key: &PedersenKey, combined: &GroupElement, opening: &Opening) -> bool {
    if opening.w.len() > key.len() {
        return false;
    }
    let mut scalars = opening.w.clone();
    scalars.push(opening.blind);
    let mut points = key.generators[..opening.w.len()].to_vec();
    points.push(key.blinding);
    multiscalar_mul(&scalars, &points) == *combined
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn key(len: usize) -> PedersenKey {
        PedersenKey::derive(&DeploymentProfile::default(), len)
    }

    fn rand_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, mag: i64) -> QuantizedMatrix {
        QuantizedMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-mag..=mag)).collect(), 1)
    }

    #[test]
    fn small_msm_matches_generic_msm() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let k = key(600);
        for &n in &[1usize, 2, 7, 8, 31, 40, 129, 600] {
            for &mag in &[1i64, 4096, 1 << 20, i64::MAX] {
                let scalars: Vec<i64> = (0..n).map(|_| rng.gen_range(-mag..=mag)).collect();
                let pts: Vec<RistrettoPoint> = k.generators()[..n].iter().map(|g| *g.point()).collect();
                let fast = small_msm(&pts, &scalars);
                let fes: Vec<FieldElement> = scalars.iter().map(|&s| FieldElement::from_i64(s)).collect();
                let slow = multiscalar_mul(&fes, &k.generators()[..n]);
                assert_eq!(GroupElement::from_point(fast), slow, "n={n} mag={mag}");
            }
        }
        let pts: Vec<RistrettoPoint> = k.generators()[..3].iter().map(|g| *g.point()).collect();
        let extremes = [i64::MIN + 1, -1, 0];
        let fes: Vec<FieldElement> = extremes.iter().map(|&s| FieldElement::from_i64(s)).collect();
        assert_eq!(GroupElement::from_point(small_msm(&pts, &extremes)), multiscalar_mul(&fes, &k.generators()[..3]));
    }

    #[test]
    fn zero_matrix_commits_to_blinder() {
        let k = key(4);
        let m = QuantizedMatrix::new(2, 4, vec![0; 8], 1);
        let rho = vec![FieldElement::from_u64(17), FieldElement::from_u64(99)];
        let set = commit_rows_with_blinders(&m, &k, rho.clone()).unwrap();
        for (c, r) in set.public.commitments.iter().zip(&rho) {
            assert_eq!(*c, k.blinding().mul(r));
        }
    }

    #[test]
    fn explicit_two_entry_commitment() {
        let k = key(2);
        let m = QuantizedMatrix::new(1, 2, vec![3, 5], 1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let set = commit_rows(&m, &k, &mut rng).unwrap();
        let rho = set.blinders[0];
        let g = k.generators();
        let expect = k.blinding().mul(&rho) + g[0].mul(&FieldElement::from_u64(3)) + g[1].mul(&FieldElement::from_u64(5));
        assert_eq!(set.public.commitments[0], expect);
        let opening = Opening { w: vec![FieldElement::from_u64(3), FieldElement::from_u64(5)], blind: rho };
        assert!(verify_opening(&k, &set.public.commitments[0], &opening));
    }

    #[test]
    fn fresh_blinders_hide() {
        let k = key(4);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = rand_matrix(&mut rng, 3, 4, 100);
        let a = commit_rows(&m, &k, &mut rng).unwrap();
        let b = commit_rows(&m, &k, &mut rng).unwrap();
        assert_ne!(a.public, b.public);
        let s: Vec<FieldElement> = (0..3).map(|_| FieldElement::random(&mut rng)).collect();
        for set in [&a, &b] {
            let c = combine(&set.public.commitments, &s).unwrap();
            assert!(verify_opening(&k, &c, &open_combination(&m, &set.blinders, &s).unwrap()));
        }
    }

    #[test]
    fn selector_and_zero_coefficients() {
        let k = key(4);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let m = rand_matrix(&mut rng, 3, 4, 100);
        let set = commit_rows(&m, &k, &mut rng).unwrap();
        let mut e1 = vec![FieldElement::ZERO; 3];
        e1[1] = FieldElement::ONE;
        assert_eq!(combine(&set.public.commitments, &e1).unwrap(), set.public.commitments[1]);
        let o = open_combination(&m, &set.blinders, &e1).unwrap();
        let row: Vec<FieldElement> = m.row(1).iter().map(|&v| FieldElement::from_i64(v)).collect();
        assert_eq!(o.w, row);
        let zero = vec![FieldElement::ZERO; 3];
        assert!(combine(&set.public.commitments, &zero).unwrap().is_identity());
        let oz = open_combination(&m, &set.blinders, &zero).unwrap();
        assert!(oz.w.iter().all(|v| v.is_zero()) && oz.blind.is_zero());
        assert!(verify_opening(&k, &GroupElement::identity(), &oz));
    }

    #[test]
    fn length_errors() {
        let k = key(2);
        let m = QuantizedMatrix::new(1, 3, vec![1, 2, 3], 1);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        assert_eq!(commit_rows(&m, &k, &mut rng).unwrap_err(), CommitError::RowTooLong { cols: 3, key_len: 2 });
        assert!(matches!(combine(&[GroupElement::identity()], &[]), Err(CommitError::LengthMismatch { .. })));
        assert!(open_combination(&m, &[FieldElement::ZERO], &[]).is_err());
        let too_long = Opening { w: vec![FieldElement::ZERO; 3], blind: FieldElement::ZERO };
        assert!(!verify_opening(&k, &GroupElement::identity(), &too_long));
    }

    #[test]
    fn tampered_openings_rejected() {
        let k = key(6);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let m = rand_matrix(&mut rng, 4, 6, 4096);
        let set = commit_rows(&m, &k, &mut rng).unwrap();
        let s: Vec<FieldElement> = (0..4).map(|_| FieldElement::random(&mut rng)).collect();
        let c = combine(&set.public.commitments, &s).unwrap();
        let honest = open_combination(&m, &set.blinders, &s).unwrap();
        assert!(verify_opening(&k, &c, &honest));
        let mut bumped = honest.clone();
        bumped.blind += FieldElement::ONE;
        assert!(!verify_opening(&k, &c, &bumped));
        let mut accepted = 0;
        for _ in 0..1000 {
            let mut t = honest.clone();
            let j = rng.gen_range(0..=t.w.len());
            let delta = FieldElement::from_u64(rng.gen_range(1..u64::MAX));
            if j == t.w.len() {
                t.blind += delta;
            } else {
                t.w[j] += delta;
            }
            accepted += verify_opening(&k, &c, &t) as usize;
        }
        assert_eq!(accepted, 0);
    }

    #[test]
    fn public_serialization_roundtrip_and_no_blinders() {
        let k = key(3);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m = rand_matrix(&mut rng, 2, 3, 10);
        let set = commit_rows(&m, &k, &mut rng).unwrap();
        let bytes = set.public.to_bytes();
        assert_eq!(bytes.len(), 8 + 2 * 32);
        assert_eq!(PublicCommitments::from_bytes(&bytes).unwrap(), set.public);
        assert_eq!(PublicCommitments::from_hex(&set.public.to_hex()).unwrap(), set.public);
        for b in &set.blinders {
            assert!(!bytes.windows(32).any(|w| w == b.to_bytes()));
        }
        assert!(PublicCommitments::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8..40].fill(0xff);
        assert!(PublicCommitments::from_bytes(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn homomorphic_opening_verifies(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
                let k = key(6);
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let m = rand_matrix(&mut rng, rows, cols, 1 << 20);
                let set = commit_rows(&m, &k, &mut rng).unwrap();
                let s: Vec<FieldElement> = (0..rows).map(|_| FieldElement::random(&mut rng)).collect();
                let c = combine(&set.public.commitments, &s).unwrap();
                prop_assert!(verify_opening(&k, &c, &open_combination(&m, &set.blinders, &s).unwrap()));
            }
        }
    }
}

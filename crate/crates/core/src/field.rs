//! Prime-field and prime-order-group arithmetic.
//!
//! The scalar field of ristretto255 (order `2^252 + 27742317777372353535851937790883648493`)
//! carries every matrix entry once it leaves the integer domain; the group itself
//! carries commitments. Both are wrapped in newtypes so the rest of the crate never
//! touches `curve25519-dalek` directly.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Decimal form of the ristretto255 group order.
pub const RISTRETTO_ORDER_DEC: &str =
    "7237005577332262213973186563042994240857116359379907606001950938285454250989";

pub const GROUP_ID_RISTRETTO255: &str = "ristretto255";
pub const HASH_ID_SHA256: &str = "sha256";

pub const DEFAULT_SCALE_BITS: u32 = 12;
pub const DEFAULT_PROFILE_ID: &str = "zkl-r255-sha256-f12";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("integer {0} is outside the centered range of the field")]
    OutOfRange(String),
    #[error("non-canonical field element encoding")]
    NonCanonical,
    #[error("invalid group element encoding")]
    InvalidPoint,
    #[error("unsupported group `{0}`")]
    UnsupportedGroup(String),
    #[error("unsupported hash `{0}`")]
    UnsupportedHash(String),
    #[error("profile modulus is not the order of the named group")]
    ModulusMismatch,
    #[error("profile modulus is not a prime above 2^250")]
    BadModulus,
    #[error("scale_bits {0} outside [4, 24]")]
    ScaleBits(u32),
    #[error("malformed profile: {0}")]
    Malformed(String),
}

/// The group order `p` as a big integer.
pub fn group_order() -> BigUint {
    RISTRETTO_ORDER_DEC.parse().expect("constant parses")
}

fn half_order() -> BigUint {
    (group_order() - 1u32) >> 1
}

/// Deployment configuration shared by both parties. Mismatched profiles abort
/// every handshake, proof and transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentProfile {
    pub profile_id: String,
    pub group_id: String,
    /// Group order, decimal.
    pub p: String,
    pub hash_id: String,
    pub scale_bits: u32,
}

impl Default for DeploymentProfile {
    fn default() -> Self {
        DeploymentProfile {
            profile_id: DEFAULT_PROFILE_ID.to_string(),
            group_id: GROUP_ID_RISTRETTO255.to_string(),
            p: RISTRETTO_ORDER_DEC.to_string(),
            hash_id: HASH_ID_SHA256.to_string(),
            scale_bits: DEFAULT_SCALE_BITS,
        }
    }
}

impl DeploymentProfile {
    /// Default profile with a different fixed-point scale.
    pub fn with_scale_bits(scale_bits: u32) -> Self {
        DeploymentProfile {
            profile_id: format!("zkl-r255-sha256-f{scale_bits}"),
            scale_bits,
            ..Default::default()
        }
    }

    /// Checks every invariant, including a probabilistic primality test of `p`.
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.profile_id.is_empty() || self.profile_id.len() > 64 {
            return Err(FieldError::Malformed("profile_id must be 1..=64 bytes".into()));
        }
        if self.group_id != GROUP_ID_RISTRETTO255 {
            return Err(FieldError::UnsupportedGroup(self.group_id.clone()));
        }
        if self.hash_id != HASH_ID_SHA256 {
            return Err(FieldError::UnsupportedHash(self.hash_id.clone()));
        }
        if !(4..=24).contains(&self.scale_bits) {
            return Err(FieldError::ScaleBits(self.scale_bits));
        }
        let p: BigUint = self
            .p
            .parse()
            .map_err(|_| FieldError::Malformed("p is not a decimal integer".into()))?;
        if p.bits() <= 250 || !is_probable_prime(&p, 24) {
            return Err(FieldError::BadModulus);
        }
        if p != group_order() {
            return Err(FieldError::ModulusMismatch);
        }
        Ok(())
    }

    /// Sorted-key JSON encoding, absorbed into transcripts and sent in handshakes.
    pub fn canonical_json(&self) -> Vec<u8> {
        crate::canonical_json(self)
    }
}

/// Miller-Rabin with the first `rounds` primes as bases.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    const SMALL: [u32; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in &SMALL {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for &a in SMALL.iter().take(rounds.min(SMALL.len())) {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Canonical residue in `[0, p)`.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct FieldElement(Scalar);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(Scalar::ZERO);
    pub const ONE: FieldElement = FieldElement(Scalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        FieldElement(Scalar::from(v))
    }

    pub fn from_i64(v: i64) -> Self {
        let mag = Scalar::from(v.unsigned_abs());
        FieldElement(if v < 0 { -mag } else { mag })
    }

    pub fn from_i128(v: i128) -> Self {
        let mag = Scalar::from(v.unsigned_abs());
        FieldElement(if v < 0 { -mag } else { mag })
    }

    /// Reduces a 512-bit little-endian integer modulo `p`.
    pub fn from_bytes_wide(bytes: &[u8; 64]) -> Self {
        FieldElement(Scalar::from_bytes_mod_order_wide(bytes))
    }

    /// Canonical 32-byte little-endian encoding.
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    /// Rejects encodings of values `>= p`.
    pub fn from_canonical_bytes(bytes: [u8; 32]) -> Result<Self, FieldError> {
        Option::<Scalar>::from(Scalar::from_canonical_bytes(bytes))
            .map(FieldElement)
            .ok_or(FieldError::NonCanonical)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, FieldError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| FieldError::NonCanonical)?;
        Self::from_canonical_bytes(arr)
    }

    pub fn random<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        FieldElement(Scalar::random(rng))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Scalar::ZERO
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(FieldElement(self.0.invert()))
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_le(&self.to_bytes())
    }

    pub(crate) fn scalar(&self) -> &Scalar {
        &self.0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fe({})", fe_to_signed(self))
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        FieldElement(self.0 + rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        FieldElement(self.0 - rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: Self) -> Self {
        FieldElement(self.0 * rhs.0)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> Self {
        FieldElement(-self.0)
    }
}

impl std::iter::Sum for FieldElement {
    fn sum<I: Iterator<Item = FieldElement>>(iter: I) -> Self {
        iter.fold(FieldElement::ZERO, |a, b| a + b)
    }
}

/// Inner product over the field. Panics on length mismatch.
pub fn inner_product(a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
    assert_eq!(a.len(), b.len(), "inner product length mismatch");
    FieldElement(a.iter().zip(b).map(|(x, y)| x.0 * y.0).sum())
}

/// Embeds a signed integer with `|k| <= (p-1)/2`.
pub fn fe_from_signed(k: &BigInt) -> Result<FieldElement, FieldError> {
    let (sign, mag) = (k.sign(), k.magnitude());
    if *mag > half_order() {
        return Err(FieldError::OutOfRange(k.to_string()));
    }
    let mut bytes = [0u8; 32];
    let le = mag.to_bytes_le();
    bytes[..le.len()].copy_from_slice(&le);
    let e = FieldElement::from_canonical_bytes(bytes).expect("magnitude below p");
    Ok(if sign == Sign::Minus { -e } else { e })
}

/// Centered lift: `e` if `e <= (p-1)/2`, else `e - p`.
pub fn fe_to_signed(e: &FieldElement) -> BigInt {
    let v = e.to_biguint();
    if v > half_order() {
        BigInt::from_biguint(Sign::Plus, v) - BigInt::from_biguint(Sign::Plus, group_order())
    } else {
        BigInt::from_biguint(Sign::Plus, v)
    }
}

/// Element of the prime-order group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(RistrettoPoint);

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FieldError> {
        let c = CompressedRistretto::from_slice(bytes).map_err(|_| FieldError::InvalidPoint)?;
        c.decompress().map(GroupElement).ok_or(FieldError::InvalidPoint)
    }

    pub fn mul(&self, e: &FieldElement) -> Self {
        GroupElement(self.0 * e.0)
    }

    pub(crate) fn point(&self) -> &RistrettoPoint {
        &self.0
    }

    pub(crate) fn from_point(p: RistrettoPoint) -> Self {
        GroupElement(p)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ge({})", hex::encode(self.to_bytes()))
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: Self) -> Self {
        GroupElement(self.0 + rhs.0)
    }
}

/// Variable-time `sum_i scalars[i] * points[i]` for arbitrary field scalars.
pub fn multiscalar_mul(scalars: &[FieldElement], points: &[GroupElement]) -> GroupElement {
    assert_eq!(scalars.len(), points.len(), "multiscalar length mismatch");
    GroupElement(RistrettoPoint::vartime_multiscalar_mul(
        scalars.iter().map(|s| &s.0),
        points.iter().map(|p| &p.0),
    ))
}

/// Transparent generator vector plus the blinding generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generators {
    pub generators: Vec<GroupElement>,
    pub blinding: GroupElement,
}

const GEN_DOMAIN: &[u8] = b"zklora/v1/hash-to-group";

enum GenSlot<'a> {
    Index(u64),
    Tag(&'a [u8]),
}

fn hash_to_group(profile_id: &str, label: &[u8], slot: GenSlot<'_>) -> GroupElement {
    for retry in 0u32.. {
        let mut h = Sha256::new();
        h.update(GEN_DOMAIN);
        h.update((profile_id.len() as u64).to_be_bytes());
        h.update(profile_id.as_bytes());
        h.update((label.len() as u64).to_be_bytes());
        h.update(label);
        match slot {
            GenSlot::Index(i) => {
                h.update([0u8]);
                h.update(i.to_be_bytes());
            }
            GenSlot::Tag(t) => {
                h.update([1u8]);
                h.update(t);
            }
        }
        h.update(retry.to_be_bytes());
        let mut candidate: [u8; 32] = h.finalize().into();
        // Canonical ristretto encodings are even field elements below 2^255.
        candidate[31] &= 0x7f;
        candidate[0] &= 0xfe;
        if let Some(p) = CompressedRistretto(candidate).decompress() {
            if p != RistrettoPoint::identity() {
                return GroupElement(p);
            }
        }
    }
    unreachable!("retry counter exhausted")
}

/// Deterministic nothing-up-my-sleeve generators `g_0..g_{count-1}` and `h`.
pub fn derive_generators(profile: &DeploymentProfile, label: &[u8], count: usize) -> Generators {
    assert!(count >= 1, "at least one generator required");
    let generators = (0..count as u64)
        .map(|i| hash_to_group(&profile.profile_id, label, GenSlot::Index(i)))
        .collect();
    let blinding = hash_to_group(&profile.profile_id, label, GenSlot::Tag(b"blind"));
    Generators { generators, blinding }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rand_fe(rng: &mut ChaCha20Rng) -> FieldElement {
        FieldElement::random(rng)
    }

    #[test]
    fn default_profile_is_valid() {
        DeploymentProfile::default().validate().unwrap();
        assert!(group_order().bits() > 250);
    }

    #[test]
    fn profile_rejects_bad_fields() {
        let p = DeploymentProfile { scale_bits: 3, ..DeploymentProfile::default() };
        assert_eq!(p.validate(), Err(FieldError::ScaleBits(3)));
        let p = DeploymentProfile {
            p: "7237005577332262213973186563042994240857116359379907606001950938285454250991".into(),
            ..DeploymentProfile::default()
        };
        assert!(p.validate().is_err());
        let p = DeploymentProfile { group_id: "bn254".into(), ..DeploymentProfile::default() };
        assert!(matches!(p.validate(), Err(FieldError::UnsupportedGroup(_))));
    }

    #[test]
    fn miller_rabin_small_cases() {
        let primes = [2u32, 3, 5, 97, 7919, 104729];
        let composites = [1u32, 4, 561, 1105, 7917, 104730];
        for p in primes {
            assert!(is_probable_prime(&BigUint::from(p), 16), "{p}");
        }
        for c in composites {
            assert!(!is_probable_prime(&BigUint::from(c), 16), "{c}");
        }
    }

    #[test]
    fn signed_embedding_edges() {
        let p = BigInt::from_biguint(Sign::Plus, group_order());
        assert_eq!(fe_from_signed(&BigInt::from(0)).unwrap(), FieldElement::ZERO);
        let minus_one = fe_from_signed(&BigInt::from(-1)).unwrap();
        assert_eq!(minus_one.to_biguint(), group_order() - 1u32);
        assert_eq!(fe_to_signed(&minus_one), BigInt::from(-1));
        assert_eq!(fe_to_signed(&FieldElement::ZERO), BigInt::from(0));
        let half = BigInt::from_biguint(Sign::Plus, half_order());
        let e = fe_from_signed(&half).unwrap();
        assert_eq!(fe_to_signed(&e), half);
        assert!(fe_from_signed(&(&half + 1)).is_err());
        assert!(fe_from_signed(&(-&half - 1)).is_err());
        assert_eq!(fe_to_signed(&fe_from_signed(&(-&half)).unwrap()), -half);
        assert!(fe_from_signed(&p).is_err());
    }

    #[test]
    fn signed_roundtrip_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let half = half_order();
        for _ in 0..1000 {
            let bytes: [u8; 32] = rng.gen();
            let mag = BigUint::from_bytes_le(&bytes) % (&half + 1u32);
            let k = if rng.gen() {
                BigInt::from_biguint(Sign::Plus, mag)
            } else {
                -BigInt::from_biguint(Sign::Plus, mag)
            };
            let e = fe_from_signed(&k).unwrap();
            assert_eq!(fe_to_signed(&e), k);
            // big-integer oracle for k mod p
            let p = BigInt::from_biguint(Sign::Plus, group_order());
            let expect = ((&k % &p) + &p) % &p;
            assert_eq!(BigInt::from_biguint(Sign::Plus, e.to_biguint()), expect);
        }
    }

    #[test]
    fn small_int_constructors_match_bigint_path() {
        for v in [0i64, 1, -1, 4096, -4096, i64::MAX, i64::MIN + 1] {
            assert_eq!(FieldElement::from_i64(v), fe_from_signed(&BigInt::from(v)).unwrap());
        }
        for v in [i128::MAX >> 2, -(1i128 << 100)] {
            assert_eq!(FieldElement::from_i128(v), fe_from_signed(&BigInt::from(v)).unwrap());
        }
    }

    #[test]
    fn field_axioms() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (a, b, c) = (rand_fe(&mut rng), rand_fe(&mut rng), rand_fe(&mut rng));
            assert_eq!((a + b) + c, a + (b + c));
            assert_eq!((a * b) * c, a * (b * c));
            assert_eq!(a * (b + c), a * b + a * c);
            assert_eq!(a + b, b + a);
            assert_eq!(a - a, FieldElement::ZERO);
            if let Some(inv) = a.invert() {
                assert_eq!(a * inv, FieldElement::ONE);
            }
        }
        assert!(FieldElement::ZERO.invert().is_none());
    }

    #[test]
    fn canonical_encoding() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = rand_fe(&mut rng);
            assert_eq!(FieldElement::from_canonical_bytes(a.to_bytes()).unwrap(), a);
        }
        // p itself and 2^256-1 are non-canonical
        let mut p_bytes = [0u8; 32];
        let le = group_order().to_bytes_le();
        p_bytes[..le.len()].copy_from_slice(&le);
        assert_eq!(FieldElement::from_canonical_bytes(p_bytes), Err(FieldError::NonCanonical));
        assert_eq!(FieldElement::from_canonical_bytes([0xff; 32]), Err(FieldError::NonCanonical));
    }

    #[test]
    fn group_encoding() {
        let id = GroupElement::identity();
        assert_eq!(GroupElement::from_bytes(&id.to_bytes()).unwrap(), id);
        assert_eq!(id.to_bytes(), [0u8; 32]);
        assert!(GroupElement::from_bytes(&[0xff; 32]).is_err());
        assert!(GroupElement::from_bytes(&[1u8; 31]).is_err());
        let g = derive_generators(&DeploymentProfile::default(), b"enc", 4);
        for p in &g.generators {
            assert_eq!(GroupElement::from_bytes(&p.to_bytes()).unwrap(), *p);
        }
    }

    #[test]
    fn group_exponent_homomorphism() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let g = derive_generators(&DeploymentProfile::default(), b"hom", 1).generators[0];
        for _ in 0..50 {
            let (a, b) = (rand_fe(&mut rng), rand_fe(&mut rng));
            assert_eq!(g.mul(&a) + g.mul(&b), g.mul(&(a + b)));
        }
    }

    #[test]
    fn generators_deterministic_prefix_and_separated() {
        let p = DeploymentProfile::default();
        let a8 = derive_generators(&p, b"A", 8);
        assert_eq!(a8, derive_generators(&p, b"A", 8));
        let a3 = derive_generators(&p, b"A", 3);
        let a5 = derive_generators(&p, b"A", 5);
        assert_eq!(a3.generators[..], a5.generators[..3]);
        assert_eq!(a3.blinding, a5.blinding);
        let b8 = derive_generators(&p, b"B", 8);
        let enc_a: std::collections::HashSet<_> = a8
            .generators
            .iter()
            .chain([&a8.blinding])
            .map(|g| g.to_bytes())
            .collect();
        assert_eq!(enc_a.len(), 9);
        for g in b8.generators.iter().chain([&b8.blinding]) {
            assert!(!enc_a.contains(&g.to_bytes()));
            assert!(!g.is_identity());
        }
        let other = DeploymentProfile::with_scale_bits(10);
        assert_ne!(derive_generators(&other, b"A", 1).generators[0], a8.generators[0]);
    }
}

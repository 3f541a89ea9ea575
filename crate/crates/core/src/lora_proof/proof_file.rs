//! `ZKLP` proof files.
//!
//! ```text
//! "ZKLP" | version u16 LE | header_len u32 LE | header JSON
//!        | v (r×32) | w_A (n×32) | ρ_A (32) | w_B (r×32) | ρ_B (32)
//! ```
//!
//! Field elements are canonical little-endian; decoding rejects anything else.

use super::{LoraProof, ProofHeader};
use crate::commitments::Opening;
use crate::field::FieldElement;

pub const PROOF_MAGIC: &[u8; 4] = b"ZKLP";
pub const PROOF_VERSION: u16 = 1;
const PREAMBLE: usize = 10;
const MAX_DIM: u32 = 1 << 24;

#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProofFileError {
    #[error("bad proof magic")]
    BadMagic,
    #[error("unsupported proof version {0}")]
    VersionUnsupported(u16),
    #[error("corrupt proof header: {0}")]
    CorruptHeader(String),
    #[error("proof body is {got} bytes, header implies {expected}")]
    BodyLength { expected: usize, got: usize },
    #[error("non-canonical field element in proof body")]
    NonCanonical,
}

pub fn encode_proof(proof: &LoraProof) -> Vec<u8> {
    let header = crate::canonical_json(&proof.header);
    let elems = proof.v.len() + proof.opening_a.w.len() + proof.opening_b.w.len() + 2;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + 32 * elems);
    out.extend_from_slice(PROOF_MAGIC);
    out.extend_from_slice(&PROOF_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let body = proof
        .v
        .iter()
        .chain(&proof.opening_a.w)
        .chain([&proof.opening_a.blind])
        .chain(&proof.opening_b.w)
        .chain([&proof.opening_b.blind]);
    for e in body {
        out.extend_from_slice(&e.to_bytes());
    }
    out
}

pub fn decode_proof(bytes: &[u8]) -> Result<LoraProof, ProofFileError> {
    if bytes.len() < PREAMBLE || &bytes[..4] != PROOF_MAGIC {
        return Err(ProofFileError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PROOF_VERSION {
        return Err(ProofFileError::VersionUnsupported(version));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body_start = PREAMBLE
        .checked_add(header_len)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| ProofFileError::CorruptHeader("header runs past end of file".into()))?;
    let header: ProofHeader = serde_json::from_slice(&bytes[PREAMBLE..body_start])
        .map_err(|e| ProofFileError::CorruptHeader(e.to_string()))?;
    if header.n > MAX_DIM || header.r > MAX_DIM {
        return Err(ProofFileError::CorruptHeader("dimensions out of range".into()));
    }
    let (n, r) = (header.n as usize, header.r as usize);
    let expected = 32 * (2 * r + n + 2);
    let body = &bytes[body_start..];
    if body.len() != expected {
        return Err(ProofFileError::BodyLength { expected, got: body.len() });
    }
    let elems: Vec<FieldElement> = body
        .chunks_exact(32)
        .map(FieldElement::from_slice)
        .collect::<Result<_, _>>()
        .map_err(|_| ProofFileError::NonCanonical)?;
    let (v, rest) = elems.split_at(r);
    let (wa, rest) = rest.split_at(n);
    let (rho_a, rest) = rest.split_first().unwrap();
    let (wb, rest) = rest.split_at(r);
    let rho_b = rest[0];
    Ok(LoraProof {
        header,
        v: v.to_vec(),
        opening_a: Opening { w: wa.to_vec(), blind: *rho_a },
        opening_b: Opening { w: wb.to_vec(), blind: rho_b },
    })
}

//! Hash-chain Fiat-Shamir transcript.
//!
//! `absorb` sets `state = SHA256(state ‖ len8(label) ‖ label ‖ len8(data) ‖ data)`
//! where `len8` is an 8-byte big-endian length. Challenges are 512-bit
//! big-endian integers reduced mod `p`; the reduction bias is below `2^-250`.

use sha2::{Digest, Sha256};

use crate::field::FieldElement;

pub const MAX_LABEL_LEN: usize = 64;

/// Domain-separation labels, in the order a proof uses them.
pub mod labels {
    pub const DOMAIN: &[u8] = b"zklora/v1";
    pub const PROFILE: &[u8] = b"profile";
    pub const MANIFEST: &[u8] = b"manifest";
    pub const COMMIT_A: &[u8] = b"commit/A";
    pub const COMMIT_B: &[u8] = b"commit/B";
    pub const X_DIGEST: &[u8] = b"x-digest";
    pub const DELTA_DIGEST: &[u8] = b"delta-digest";
    pub const CHAL_C: &[u8] = b"chal/c";
    pub const CHAL_R: &[u8] = b"chal/r";
    /// The prover's intermediate vector, bound before `s` is drawn.
    pub const PROOF_V: &[u8] = b"proof/v";
    pub const CHAL_S: &[u8] = b"chal/s";
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("label must be 1..={MAX_LABEL_LEN} bytes, got {0}")]
    LabelTooLong(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    state: [u8; 32],
}

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

impl Transcript {
    /// Zero state followed by the `zklora/v1` domain separator.
    pub fn new() -> Self {
        let mut t = Transcript { state: [0u8; 32] };
        t.absorb(labels::DOMAIN, b"").expect("static label");
        t
    }

    pub fn from_state(state: [u8; 32]) -> Self {
        Transcript { state }
    }

    pub fn state(&self) -> [u8; 32] {
        self.state
    }

    pub fn absorb(&mut self, label: &[u8], data: &[u8]) -> Result<(), TranscriptError> {
        check_label(label)?;
        let mut h = Sha256::new();
        h.update(self.state);
        h.update((label.len() as u64).to_be_bytes());
        h.update(label);
        h.update((data.len() as u64).to_be_bytes());
        h.update(data);
        self.state = h.finalize().into();
        Ok(())
    }

    pub fn absorb_field_elements(&mut self, label: &[u8], elems: &[FieldElement]) -> Result<(), TranscriptError> {
        let bytes: Vec<u8> = elems.iter().flat_map(|e| e.to_bytes()).collect();
        self.absorb(label, &bytes)
    }

    /// Derives `count` field elements, then chains the label into the state.
    pub fn challenge_vector(&mut self, label: &[u8], count: usize) -> Result<Vec<FieldElement>, TranscriptError> {
        check_label(label)?;
        let out = (0..count as u64)
            .map(|i| {
                let half = |tag: u8| -> [u8; 32] {
                    let mut h = Sha256::new();
                    h.update(self.state);
                    h.update(label);
                    h.update(i.to_be_bytes());
                    h.update([tag]);
                    h.finalize().into()
                };
                let mut wide = [0u8; 64];
                wide[..32].copy_from_slice(&half(0));
                wide[32..].copy_from_slice(&half(1));
                // big-endian integer, reduction wants little-endian
                wide.reverse();
                FieldElement::from_bytes_wide(&wide)
            })
            .collect();
        self.absorb(label, b"")?;
        Ok(out)
    }
}

fn check_label(label: &[u8]) -> Result<(), TranscriptError> {
    if label.is_empty() || label.len() > MAX_LABEL_LEN {
        return Err(TranscriptError::LabelTooLong(label.len()));
    }
    Ok(())
}

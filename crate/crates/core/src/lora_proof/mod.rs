//! Per-module proofs that a delivered delta equals `B_q·A_q·X_q` for the
//! committed `A` and `B`.
//!
//! The argument is a committed Freivalds check. With challenges `c ∈ F^m`,
//! `r ∈ F^d` and `s ∈ F^rank`, the prover sends `v = A_q·(X_q·c)` and the
//! openings `sᵀA`, `rᵀB` of the row commitments. The verifier checks
//!
//! ```text
//! rᵀ·Δ_q·c = (rᵀB)·v        (outer)
//! sᵀ·v     = (sᵀA)·(X_q·c)  (inner)
//! ```
//!
//! Each proof reveals one row combination of `A` and of `B`; [`OpeningBudget`]
//! caps how many the contributor ever hands out per commitment.

mod budget;
mod leakage;
mod proof_file;
mod prover;
mod verifier;

use serde::{Deserialize, Serialize};

pub use budget::{BudgetDecision, OpeningBudget};
pub use leakage::{opening_coefficients, reconstruct_rows, solve_left};
pub use proof_file::{decode_proof, encode_proof, ProofFileError, PROOF_MAGIC, PROOF_VERSION};
pub use prover::{assemble_proof, prove_module, ProveError, ProverInputs};
pub use verifier::{verify_bundle, verify_entries, verify_module, BundleContext, ModuleCheck};

use crate::commitments::{CommitmentSet, Opening, PublicCommitments};
use crate::field::FieldElement;
use crate::quantizer::QuantizedMatrix;

pub const REPORT_VERSION: u32 = 1;

/// Binds a proof to its session, module, dimensions and exact witness bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofHeader {
    pub profile_id: String,
    /// 16 bytes, hex.
    pub session_id: String,
    pub module_id: u32,
    pub n: u32,
    pub r: u32,
    pub d: u32,
    pub m: u32,
    pub scale_bits: u32,
    pub x_digest: String,
    pub delta_digest: String,
    pub commit_a_digest: String,
    pub commit_b_digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoraProof {
    pub header: ProofHeader,
    /// `A_q·(X_q·c)`, length `r`.
    pub v: Vec<FieldElement>,
    /// `sᵀA`, length `n`.
    pub opening_a: Opening,
    /// `rᵀB`, length `r`.
    pub opening_b: Opening,
}

/// Row commitments for one module's `A` (`r` rows of length `n`) and `B`
/// (`d` rows of length `r`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleCommitments {
    pub a: CommitmentSet,
    pub b: CommitmentSet,
}

impl ModuleCommitments {
    pub fn public(&self) -> PublicModuleCommitments {
        PublicModuleCommitments { a: self.a.public.clone(), b: self.b.public.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicModuleCommitments {
    pub a: PublicCommitments,
    pub b: PublicCommitments,
}

/// The cached `(X_q, Δ_q)` pair a proof binds to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleWitness {
    pub x_q: QuantizedMatrix,
    pub delta_q: QuantizedMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    /// Profile, session, module id, dimensions or vector lengths disagree.
    HeaderMismatch,
    DigestMismatch,
    OverflowBound,
    OpeningAInvalid,
    OpeningBInvalid,
    FreivaldsOuterFail,
    FreivaldsInnerFail,
    MissingProof,
    DuplicateModule,
    UnknownModule,
    MissingWitness,
    CorruptProofFile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleResult {
    pub module_id: u32,
    pub accepted: bool,
    pub failure: Option<FailureReason>,
    pub verify_millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationReport {
    pub report_version: u32,
    pub session_id: String,
    pub overall: Overall,
    pub modules: Vec<ModuleResult>,
    pub num_modules: usize,
    pub num_failed: usize,
    pub total_verify_millis: f64,
}

impl VerificationReport {
    pub fn from_results(session_id: String, mut modules: Vec<ModuleResult>) -> Self {
        modules.sort_by_key(|m| m.module_id);
        let num_failed = modules.iter().filter(|m| !m.accepted).count();
        let total_verify_millis = modules.iter().map(|m| m.verify_millis).sum();
        VerificationReport {
            report_version: REPORT_VERSION,
            session_id,
            overall: if num_failed == 0 { Overall::Accept } else { Overall::Reject },
            num_modules: modules.len(),
            num_failed,
            modules,
            total_verify_millis,
        }
    }

    pub fn accepted(&self) -> bool {
        self.overall == Overall::Accept
    }

    pub fn failing_modules(&self) -> Vec<u32> {
        self.modules.iter().filter(|m| !m.accepted).map(|m| m.module_id).collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::canonical_json(self)
    }
}

//! Verifiable remote LoRA inference.
//!
//! A base-model user runs a forward pass locally and ships the inputs of
//! LoRA-augmented slots to a contributor, who answers with the integer delta
//! `B·A·x` and later proves, module by module, that every delta came from the
//! weights it committed to. The user accepts the run only if every proof checks.
//!
//! Layers, bottom-up:
//! - [`field`]: ristretto255 scalars and points, generator derivation.
//! - [`quantizer`]: fixed-point embedding and the exact integer delta.
//! - [`tensorio`]: tensor container files, model/LoRA manifests, synthetic models.
//! - [`transcript`]: Fiat-Shamir challenges.
//! - [`commitments`]: row-wise Pedersen commitments to weight matrices.
//! - [`lora_proof`]: the per-module prover and verifier.
//! - [`mpi`]: the two-party wire protocol, server and client.

pub mod commitments;
pub mod field;
pub mod lora_proof;
pub mod matrix;
pub mod mpi;
pub mod quantizer;
pub mod tensorio;
pub mod transcript;

pub use commitments::{CommitmentSet, Opening, PedersenKey, PublicCommitments};
pub use field::{DeploymentProfile, FieldElement, GroupElement};
pub use lora_proof::{
    FailureReason, LoraProof, OpeningBudget, Overall, ProofHeader, VerificationReport,
};
pub use matrix::FloatMatrix;
pub use quantizer::QuantizedMatrix;
pub use tensorio::{LoraManifest, LoraWeights, ModelConfig, Tensor};

use sha2::{Digest, Sha256};

/// Serializes with sorted object keys and no insignificant whitespace.
///
/// Going through `serde_json::Value` sorts keys because the `preserve_order`
/// feature is never enabled in this workspace.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_vec(&v).expect("json value serializes")
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

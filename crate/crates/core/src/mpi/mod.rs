//! The two-party protocol.
//!
//! ```text
//! user                                contributor
//!  HELLO(session, profile)  ──────▶
//!                           ◀──────   HELLO, MANIFEST(manifest, commitments)
//!  ACT_REQUEST(id, x)       ──────▶   (per adapted slot, ascending id)
//!                           ◀──────   ACT_RESPONSE(id, Δ_q, Δ)
//!  PROOF_REQUEST            ──────▶
//!                           ◀──────   PROOF_BUNDLE
//!  VERIFY_REPORT            ──────▶
//! ```
//!
//! The user computes `W·x` locally and adds the returned `Δ`; only activations
//! and deltas cross the wire, never `A`, `B` or blinders.

mod contributor;
mod forward;
mod offline;
mod records;
mod user;
pub mod wire;

pub use contributor::{serve, Contributor, ContributorConfig, SessionOutcome};
pub use forward::{monolithic_quantized, monolithic_reference, BaseModel, ReferenceRun, Route};
pub use offline::{offline_prove, offline_verify, proof_file_name};
pub use records::{
    read_session_dir, read_witness_cache, write_session_dir, write_witness_cache, ModuleSecrets, SessionRecord, WitnessCache,
    BLINDERS_FILE, RECORDS_FILE, SESSION_FILE,
};
pub use user::{run_inference, run_user_inference, InferenceOutcome, SessionResult, UserSession};
pub use wire::{ErrorCode, Message, WireError};

use crate::commitments::CommitError;
use crate::field::FieldError;
use crate::lora_proof::ProveError;
use crate::quantizer::QuantError;
use crate::tensorio::TensorIoError;

#[derive(Debug, thiserror::Error)]
pub enum MpiError {
    #[error("could not connect to {0}")]
    ConnectFailed(String, #[source] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("peer sent error {code:#06x}: {message}")]
    Remote { code: u16, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("contributor runs profile {0}")]
    ProfileMismatch(String),
    #[error("module {0}: float delta is not the dequantized integer delta")]
    DeltaMismatch(u32),
    #[error("no witness for module {0}")]
    MissingWitness(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Commit(#[from] CommitError),
    #[error(transparent)]
    Prove(#[from] ProveError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl MpiError {
    /// The wire error code, when the peer sent one.
    pub fn remote_code(&self) -> Option<ErrorCode> {
        match self {
            MpiError::Remote { code, .. } => ErrorCode::from_u16(*code),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpStream;

use super::forward::{BaseModel, Route};
use super::records::SessionRecord;
use super::wire::{read_message, write_message, ErrorCode, Hello, Message, Role, SettingsTimings, WireError, WIRE_VERSION};
use super::MpiError;
use crate::commitments::PedersenKey;
use crate::field::DeploymentProfile;
use crate::lora_proof::{decode_proof, verify_entries, BundleContext, ModuleWitness, PublicModuleCommitments, VerificationReport};
use crate::matrix::FloatMatrix;
use crate::quantizer::{dequantize, quantize};
use crate::tensorio::{LoraManifest, Tensor};

/// Best-effort ERROR frame for a failure detected locally. Peer errors and
/// dead streams get nothing.
fn report_failure<S: Write>(stream: &mut S, err: &MpiError) {
    let code = match err {
        MpiError::Remote { .. } | MpiError::ConnectFailed(..) => return,
        MpiError::Wire(WireError::Io(_) | WireError::Closed) => return,
        MpiError::ProfileMismatch(_) => ErrorCode::ProfileMismatch,
        MpiError::Tensor(_) => ErrorCode::DimMismatch,
        _ => ErrorCode::Protocol,
    };
    let _ = write_message(stream, &Message::error(code, err.to_string()));
}

fn expect_reply<S: Read>(stream: &mut S) -> Result<Message, MpiError> {
    match read_message(stream)? {
        Message::Error { code, message } => Err(MpiError::Remote { code, message }),
        m => Ok(m),
    }
}

/// The user's side of one session over any ordered byte stream.
pub struct UserSession<S> {
    stream: S,
    pub profile: DeploymentProfile,
    pub session_id: [u8; 16],
    pub manifest: LoraManifest,
    pub commitments: Vec<PublicModuleCommitments>,
    pub settings: SettingsTimings,
    /// `(X_q, Δ_q)` per exchanged module, recomputed or received locally.
    pub witnesses: BTreeMap<u32, ModuleWitness>,
    record: SessionRecord,
}

impl<S: Read + Write> UserSession<S> {
    /// HELLO exchange followed by the contributor's MANIFEST.
    pub fn connect(mut stream: S, profile: DeploymentProfile, session_id: [u8; 16]) -> Result<Self, MpiError> {
        match Self::handshake(&mut stream, &profile, session_id) {
            Ok((record, commitments, settings)) => Ok(UserSession {
                stream,
                profile,
                session_id,
                manifest: record.manifest.clone(),
                commitments,
                settings,
                witnesses: BTreeMap::new(),
                record,
            }),
            Err(e) => {
                report_failure(&mut stream, &e);
                Err(e)
            }
        }
    }

    fn handshake(
        stream: &mut S,
        profile: &DeploymentProfile,
        session_id: [u8; 16],
    ) -> Result<(SessionRecord, Vec<PublicModuleCommitments>, SettingsTimings), MpiError> {
        write_message(
            stream,
            &Message::Hello(Hello { version: WIRE_VERSION, role: Role::User, session_id, profile: profile.clone() }),
        )?;
        match expect_reply(stream)? {
            Message::Hello(h) if h.role == Role::Contributor && h.session_id == session_id && h.version == WIRE_VERSION => {
                if h.profile != *profile {
                    return Err(MpiError::ProfileMismatch(h.profile.profile_id));
                }
            }
            _ => return Err(MpiError::Protocol("expected contributor HELLO".into())),
        }
        let msg = match expect_reply(stream)? {
            Message::Manifest(m) => m,
            _ => return Err(MpiError::Protocol("expected MANIFEST".into())),
        };
        if msg.session_id != hex::encode(session_id) {
            return Err(MpiError::Protocol("manifest is for another session".into()));
        }
        msg.manifest.validate()?;
        if msg.commitments.len() != msg.manifest.modules.len() {
            return Err(MpiError::Protocol("commitment count differs from module count".into()));
        }
        let record = SessionRecord {
            profile: profile.clone(),
            session_id: msg.session_id,
            manifest: msg.manifest,
            commitments: msg.commitments,
        };
        let commitments = record.public_commitments()?;
        for (m, c) in record.manifest.modules.iter().zip(&commitments) {
            let shapes = (c.a.rows, c.a.cols, c.b.rows, c.b.cols);
            if shapes != (m.r, m.n, m.d, m.r) {
                return Err(MpiError::Protocol(format!("commitment shapes for module {} do not match", m.module_id)));
            }
        }
        Ok((record, commitments, msg.settings_ms))
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    /// Sends `x` for one module and returns the float delta after checking it
    /// is exactly the dequantization of the integer delta.
    pub fn activation(&mut self, module_id: u32, x: &FloatMatrix) -> Result<FloatMatrix, MpiError> {
        self.exchange(module_id, x).inspect_err(|e| report_failure(&mut self.stream, e))
    }

    fn exchange(&mut self, module_id: u32, x: &FloatMatrix) -> Result<FloatMatrix, MpiError> {
        let m = self
            .manifest
            .module(module_id)
            .ok_or_else(|| MpiError::Protocol(format!("module {module_id} is not in the manifest")))?
            .clone();
        let x_q = quantize(x, m.scale_bits)?;
        write_message(&mut self.stream, &Message::ActRequest { module_id, x: Tensor::from_matrix(x) })?;
        let (delta_q, delta) = match expect_reply(&mut self.stream)? {
            Message::ActResponse { module_id: id, delta_q, delta } if id == module_id => (delta_q, delta),
            _ => return Err(MpiError::Protocol("expected ACT_RESPONSE for the requested module".into())),
        };
        let shape = [m.d, x.cols as u32];
        if delta_q.shape() != shape || delta.shape() != shape {
            return Err(MpiError::Protocol(format!("module {module_id} returned a delta of the wrong shape")));
        }
        let delta_q = delta_q.to_quantized(3)?;
        let delta = delta.to_matrix()?;
        let expected = dequantize(&delta_q, m.scale_bits);
        if expected.data.iter().zip(&delta.data).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(MpiError::DeltaMismatch(module_id));
        }
        self.witnesses.insert(module_id, ModuleWitness { x_q, delta_q });
        Ok(delta)
    }

    /// Requests the proof bundle, verifies it and reports the verdict back.
    pub fn finish(mut self) -> Result<SessionResult, MpiError> {
        write_message(&mut self.stream, &Message::ProofRequest)?;
        let proofs = match expect_reply(&mut self.stream) {
            Ok(Message::ProofBundle(p)) => p,
            Ok(_) => {
                let e = MpiError::Protocol("expected PROOF_BUNDLE".into());
                report_failure(&mut self.stream, &e);
                return Err(e);
            }
            Err(e) => {
                report_failure(&mut self.stream, &e);
                return Err(e);
            }
        };
        let key = PedersenKey::derive(&self.profile, self.manifest.key_length());
        let decoded: Vec<_> = proofs.iter().map(|b| decode_proof(b)).collect();
        // undecodable proofs are charged to the module expected at that position
        let expected_ids: Vec<u32> = self.witnesses.keys().copied().collect();
        let entries = decoded
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                Ok(p) => (p.header.module_id, Ok(p)),
                Err(e) => (expected_ids.get(i).copied().unwrap_or(u32::MAX), Err(e.clone())),
            })
            .collect();
        let ctx = BundleContext {
            profile: &self.profile,
            session_id: self.session_id,
            manifest: &self.manifest,
            commitments: &self.commitments,
            key: &key,
            witnesses: &self.witnesses,
        };
        let report = verify_entries(entries, &ctx);
        write_message(&mut self.stream, &Message::VerifyReport(report.clone()))?;
        Ok(SessionResult { report, record: self.record, witnesses: self.witnesses, proofs, settings: self.settings })
    }
}

pub struct SessionResult {
    pub report: VerificationReport,
    pub record: SessionRecord,
    pub witnesses: BTreeMap<u32, ModuleWitness>,
    /// Proof files exactly as received.
    pub proofs: Vec<Vec<u8>>,
    pub settings: SettingsTimings,
}

pub struct InferenceOutcome {
    pub output: FloatMatrix,
    /// An overall `Reject` still returns the outputs; callers must check.
    pub session: SessionResult,
}

impl InferenceOutcome {
    pub fn accepted(&self) -> bool {
        self.session.report.accepted()
    }
}

/// Full user flow over an established stream.
pub fn run_inference<S: Read + Write>(
    stream: S,
    profile: &DeploymentProfile,
    base: &BaseModel,
    x: &FloatMatrix,
    session_id: [u8; 16],
) -> Result<InferenceOutcome, MpiError> {
    let mut session = UserSession::connect(stream, profile.clone(), session_id)?;
    let routes: Vec<Route> = base.routes(&session.manifest).inspect_err(|e| report_failure(&mut session.stream, e))?;
    let output = base.forward(&routes, x, |id, xin| session.activation(id, xin))?;
    let session = session.finish()?;
    Ok(InferenceOutcome { output, session })
}

/// [`run_inference`] over TCP.
pub fn run_user_inference(
    addr: &str,
    profile: &DeploymentProfile,
    base: &BaseModel,
    x: &FloatMatrix,
    session_id: [u8; 16],
) -> Result<InferenceOutcome, MpiError> {
    let stream = TcpStream::connect(addr).map_err(|e| MpiError::ConnectFailed(addr.to_string(), e))?;
    let _ = stream.set_nodelay(true);
    run_inference(stream, profile, base, x, session_id)
}

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use rand::{CryptoRng, RngCore};

use super::records::{commitments_hex, write_witness_cache, ModuleSecrets, SessionRecord};
use super::wire::{read_message, write_message, ErrorCode, Hello, ManifestMsg, Message, Role, SettingsTimings, WireError, WIRE_VERSION};
use super::MpiError;
use crate::commitments::{commit_rows, PedersenKey};
use crate::field::{group_order, DeploymentProfile};
use crate::lora_proof::{encode_proof, prove_module, ModuleCommitments, ModuleWitness, OpeningBudget, ProveError, ProverInputs, PublicModuleCommitments, VerificationReport};
use crate::matrix::FloatMatrix;
use crate::quantizer::{delta_exact, dequantize, overflow_check, quantize, QuantError};
use crate::tensorio::{LoraManifest, LoraWeights, Tensor};

#[derive(Clone, Debug, Default)]
pub struct ContributorConfig {
    /// Budget state is saved here after every bundle.
    pub budget_path: Option<PathBuf>,
    /// Each session's witness cache is persisted to `<dir>/<session hex>/`.
    pub witness_dir: Option<PathBuf>,
}

/// What one connection did, for logging and tests.
#[derive(Clone, Debug, Default)]
pub struct SessionOutcome {
    pub session_id: Option<[u8; 16]>,
    pub activations: usize,
    pub proofs_sent: usize,
    pub report: Option<VerificationReport>,
    /// Set when the session ended on an error; `code` is what was sent.
    pub error_code: Option<ErrorCode>,
    pub error: Option<String>,
}

enum Abort {
    Reply(ErrorCode, String),
    Transport(String),
}

impl From<WireError> for Abort {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(_) | WireError::Closed => Abort::Transport(e.to_string()),
            other => Abort::Reply(ErrorCode::Protocol, other.to_string()),
        }
    }
}

fn reply(code: ErrorCode, msg: impl Into<String>) -> Abort {
    Abort::Reply(code, msg.into())
}

/// The weight holder. Commitments are computed once at construction and the
/// opening budget is shared by every session.
pub struct Contributor {
    profile: DeploymentProfile,
    manifest: LoraManifest,
    modules: Vec<ModuleSecrets>,
    public: Vec<PublicModuleCommitments>,
    settings: SettingsTimings,
    budget: Mutex<OpeningBudget>,
    config: ContributorConfig,
}

impl Contributor {
    pub fn new<R: RngCore + CryptoRng>(
        profile: DeploymentProfile,
        manifest: LoraManifest,
        weights: &LoraWeights,
        budget: OpeningBudget,
        config: ContributorConfig,
        rng: &mut R,
    ) -> Result<Self, MpiError> {
        profile.validate()?;
        manifest.validate()?;
        if weights.modules.len() != manifest.modules.len() {
            return Err(MpiError::Config(format!(
                "{} weight pairs for {} manifest modules",
                weights.modules.len(),
                manifest.modules.len()
            )));
        }
        let start = Instant::now();
        let key = PedersenKey::derive(&profile, manifest.key_length());
        let generators_ms = start.elapsed().as_secs_f64() * 1e3;

        let mut modules = Vec::with_capacity(manifest.modules.len());
        let mut commit_ms = Vec::with_capacity(manifest.modules.len());
        for (m, pair) in manifest.modules.iter().zip(&weights.modules) {
            if m.scale_bits != profile.scale_bits {
                return Err(MpiError::Config(format!(
                    "module {} uses {} scale bits, profile has {}",
                    m.module_id, m.scale_bits, profile.scale_bits
                )));
            }
            let (n, r, d) = (m.n as usize, m.r as usize, m.d as usize);
            if (pair.a.rows, pair.a.cols, pair.b.rows, pair.b.cols) != (r, n, d, r) {
                return Err(MpiError::Config(format!("module {} weights do not match n={n} r={r} d={d}", m.module_id)));
            }
            let a_q = quantize(&pair.a, m.scale_bits)?;
            let b_q = quantize(&pair.b, m.scale_bits)?;
            let start = Instant::now();
            let commitments = ModuleCommitments { a: commit_rows(&a_q, &key, rng)?, b: commit_rows(&b_q, &key, rng)? };
            commit_ms.push(start.elapsed().as_secs_f64() * 1e3);
            modules.push(ModuleSecrets { a_q, b_q, commitments });
        }
        let public = modules.iter().map(|s| s.commitments.public()).collect();
        Ok(Contributor {
            profile,
            manifest,
            modules,
            public,
            settings: SettingsTimings { generators_ms, commit_ms },
            budget: Mutex::new(budget),
            config,
        })
    }

    pub fn profile(&self) -> &DeploymentProfile {
        &self.profile
    }

    pub fn manifest(&self) -> &LoraManifest {
        &self.manifest
    }

    pub fn public_commitments(&self) -> &[PublicModuleCommitments] {
        &self.public
    }

    pub fn settings(&self) -> &SettingsTimings {
        &self.settings
    }

    /// Weights and blinders, for fault-injection tooling.
    pub fn secrets(&self, module_id: u32) -> Option<&ModuleSecrets> {
        self.modules.get(module_id as usize)
    }

    pub fn budget_snapshot(&self) -> OpeningBudget {
        self.budget.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn record(&self, session_id: [u8; 16]) -> SessionRecord {
        SessionRecord {
            profile: self.profile.clone(),
            session_id: hex::encode(session_id),
            manifest: self.manifest.clone(),
            commitments: self.public.iter().map(commitments_hex).collect(),
        }
    }

    /// Runs one session to completion. Never panics on peer input; any error
    /// is answered with an ERROR frame (when the transport still works) and
    /// ends the session.
    pub fn handle_session<S: Read + Write>(&self, mut stream: S) -> SessionOutcome {
        let mut outcome = SessionOutcome::default();
        match self.run_session(&mut stream, &mut outcome) {
            Ok(()) => {}
            Err(Abort::Reply(code, message)) => {
                let _ = write_message(&mut stream, &Message::error(code, message.clone()));
                outcome.error_code = Some(code);
                outcome.error = Some(message);
            }
            Err(Abort::Transport(message)) => outcome.error = Some(message),
        }
        outcome
    }

    fn run_session<S: Read + Write>(&self, stream: &mut S, outcome: &mut SessionOutcome) -> Result<(), Abort> {
        let hello = match read_message(stream)? {
            Message::Hello(h) => h,
            _ => return Err(reply(ErrorCode::Protocol, "expected HELLO")),
        };
        if hello.version != WIRE_VERSION || hello.role != Role::User {
            return Err(reply(ErrorCode::Protocol, "unsupported version or role"));
        }
        if hello.profile != self.profile {
            return Err(reply(
                ErrorCode::ProfileMismatch,
                format!("contributor runs profile {}, peer asked for {}", self.profile.profile_id, hello.profile.profile_id),
            ));
        }
        let session_id = hello.session_id;
        outcome.session_id = Some(session_id);
        let session_hex = hex::encode(session_id);
        write_message(
            stream,
            &Message::Hello(Hello { version: WIRE_VERSION, role: Role::Contributor, session_id, profile: self.profile.clone() }),
        )?;
        let record = self.record(session_id);
        write_message(
            stream,
            &Message::Manifest(ManifestMsg {
                session_id: session_hex,
                manifest: self.manifest.clone(),
                commitments: record.commitments.clone(),
                settings_ms: self.settings.clone(),
            }),
        )?;

        let mut cache: BTreeMap<u32, ModuleWitness> = BTreeMap::new();
        let mut last: Option<u32> = None;
        let mut proved = false;
        loop {
            let msg = match read_message(stream) {
                Err(WireError::Closed) => break,
                other => other?,
            };
            match msg {
                Message::ActRequest { module_id, x } if !proved => {
                    if last.is_some_and(|l| module_id <= l) {
                        return Err(reply(ErrorCode::Protocol, "module exchanges must follow ascending module order"));
                    }
                    let (witness, delta) = self.activation(module_id, x)?;
                    write_message(
                        stream,
                        &Message::ActResponse {
                            module_id,
                            delta_q: Tensor::from_quantized(&witness.delta_q),
                            delta: Tensor::from_matrix(&delta),
                        },
                    )?;
                    cache.insert(module_id, witness);
                    last = Some(module_id);
                    outcome.activations += 1;
                }
                Message::ProofRequest if !proved => {
                    self.persist(&record, &cache)?;
                    let proofs = self.prove_all(session_id, &cache)?;
                    outcome.proofs_sent = proofs.len();
                    write_message(stream, &Message::ProofBundle(proofs))?;
                    cache.clear();
                    proved = true;
                }
                Message::VerifyReport(report) if proved => {
                    outcome.report = Some(report);
                    return Ok(());
                }
                Message::Error { code, message } => {
                    outcome.error = Some(format!("peer error {code:#06x}: {message}"));
                    return Ok(());
                }
                _ => return Err(reply(ErrorCode::Protocol, "unexpected message for session state")),
            }
        }
        self.persist(&record, &cache)
    }

    fn activation(&self, module_id: u32, x: Tensor) -> Result<(ModuleWitness, FloatMatrix), Abort> {
        let m = self
            .manifest
            .module(module_id)
            .ok_or_else(|| reply(ErrorCode::UnknownModule, format!("no module {module_id}")))?;
        let secrets = &self.modules[module_id as usize];
        let x = match x {
            Tensor::F32 { shape, data } if shape.len() == 2 && shape[0] == m.n && shape[1] >= 1 => {
                FloatMatrix::new(shape[0] as usize, shape[1] as usize, data)
            }
            _ => return Err(reply(ErrorCode::DimMismatch, format!("module {module_id} expects an f32 {} x m activation", m.n))),
        };
        let x_q = quantize(&x, m.scale_bits).map_err(|e| match e {
            QuantError::Overflow(_) => reply(ErrorCode::OverflowBound, e.to_string()),
            _ => reply(ErrorCode::DimMismatch, e.to_string()),
        })?;
        let bound = overflow_check(
            m.n as usize,
            m.r as usize,
            secrets.a_q.max_abs(),
            secrets.b_q.max_abs(),
            x_q.max_abs(),
            &group_order(),
        );
        if !bound.is_ok() {
            return Err(reply(ErrorCode::OverflowBound, format!("delta bound {} exceeds (p-1)/2", bound.bound)));
        }
        let delta_q = delta_exact(&secrets.a_q, &secrets.b_q, &x_q).map_err(|e| reply(ErrorCode::OverflowBound, e.to_string()))?;
        let delta = dequantize(&delta_q, m.scale_bits);
        Ok((ModuleWitness { x_q, delta_q }, delta))
    }

    fn prove_all(&self, session_id: [u8; 16], cache: &BTreeMap<u32, ModuleWitness>) -> Result<Vec<Vec<u8>>, Abort> {
        // single writer: the whole bundle is charged under one lock
        let mut budget = self.budget.lock().unwrap_or_else(|p| p.into_inner());
        let mut proofs = Vec::with_capacity(cache.len());
        for (id, witness) in cache {
            let s = &self.modules[*id as usize];
            let inputs = ProverInputs {
                profile: &self.profile,
                session_id,
                module: &self.manifest.modules[*id as usize],
                a_q: &s.a_q,
                b_q: &s.b_q,
                commitments: &s.commitments,
                witness,
            };
            let proof = prove_module(&inputs, &mut budget).map_err(|e| match e {
                ProveError::BudgetExceeded { .. } => reply(ErrorCode::BudgetExceeded, format!("module {id}: {e}")),
                ProveError::OverflowBound(_) => reply(ErrorCode::OverflowBound, format!("module {id}: {e}")),
                _ => reply(ErrorCode::Internal, format!("module {id}: {e}")),
            })?;
            proofs.push(encode_proof(&proof));
        }
        if let Some(path) = &self.config.budget_path {
            budget.save(path).map_err(|e| reply(ErrorCode::Internal, e.to_string()))?;
        }
        Ok(proofs)
    }

    fn persist(&self, record: &SessionRecord, cache: &BTreeMap<u32, ModuleWitness>) -> Result<(), Abort> {
        let Some(dir) = &self.config.witness_dir else { return Ok(()) };
        if cache.is_empty() {
            return Ok(());
        }
        let secrets = cache.keys().map(|id| (*id, &self.modules[*id as usize])).collect();
        write_witness_cache(&dir.join(&record.session_id), record, cache, &secrets)
            .map_err(|e| reply(ErrorCode::Internal, e.to_string()))
    }
}

/// Accepts connections and runs each session on its own thread. With
/// `max_sessions` set, returns after that many sessions have finished.
pub fn serve(listener: TcpListener, contributor: Arc<Contributor>, max_sessions: Option<usize>) -> std::io::Result<Vec<SessionOutcome>> {
    let mut handles = Vec::new();
    let mut accepted = 0usize;
    for conn in listener.incoming() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        let _ = stream.set_nodelay(true);
        let c = Arc::clone(&contributor);
        handles.push(thread::spawn(move || c.handle_session(stream)));
        accepted += 1;
        match max_sessions {
            Some(max) if accepted >= max => break,
            Some(_) => {}
            None => handles.retain(|h| !h.is_finished()),
        }
    }
    Ok(handles.into_iter().filter_map(|h| h.join().ok()).collect())
}

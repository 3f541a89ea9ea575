use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::field::DeploymentProfile;
use crate::lora_proof::{FailureReason, OpeningBudget};
use crate::matrix::FloatMatrix;
use crate::quantizer::quantize;
use crate::tensorio::{gen_input, gen_synthetic, LoraManifest, LoraWeights, SyntheticModel, SyntheticSpec};

fn synth(layers: usize, dim: u32, rank: u32, seed: u64) -> SyntheticModel {
    gen_synthetic(&SyntheticSpec::small(layers, dim, rank, seed)).unwrap()
}

fn contributor(model: &SyntheticModel, budget: OpeningBudget, config: ContributorConfig) -> Arc<Contributor> {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    Arc::new(
        Contributor::new(DeploymentProfile::default(), model.manifest.clone(), &model.weights, budget, config, &mut rng).unwrap(),
    )
}

fn spawn(c: Arc<Contributor>, sessions: usize) -> (String, JoinHandle<Vec<SessionOutcome>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    (addr, thread::spawn(move || serve(listener, c, Some(sessions)).unwrap()))
}

fn base(model: &SyntheticModel) -> BaseModel {
    BaseModel::new(model.config.clone(), &model.base_tensors).unwrap()
}

#[test]
fn four_module_session_verifies() {
    let model = synth(4, 16, 4, 1);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 1);
    let x = gen_input(1, 16, 15);
    let out = run_user_inference(&addr, &DeploymentProfile::default(), &base(&model), &x, [1; 16]).unwrap();
    assert!(out.accepted(), "{:?}", out.session.report);
    assert_eq!(out.session.report.num_modules, 4);
    assert_eq!(out.session.proofs.len(), 4);
    let outcomes = server.join().unwrap();
    assert_eq!(outcomes[0].activations, 4);
    assert_eq!(outcomes[0].proofs_sent, 4);
    assert!(outcomes[0].report.as_ref().unwrap().accepted());
    assert!(outcomes[0].error.is_none());
}

#[test]
fn distributed_matches_monolithic() {
    let model = synth(2, 12, 3, 2);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 1);
    let b = base(&model);
    let x = gen_input(2, 12, 5);
    let out = run_user_inference(&addr, &DeploymentProfile::default(), &b, &x, [2; 16]).unwrap();
    server.join().unwrap();
    let (mono, deltas) = monolithic_quantized(&b, &model.manifest, &model.weights, &x).unwrap();
    assert_eq!(out.output, mono);
    for (id, w) in &out.session.witnesses {
        assert_eq!(w.delta_q, deltas[id]);
    }
    let reference = monolithic_reference(&b, &model.manifest, &model.weights, &x).unwrap();
    let dev = reference.max_deviation(&out.output);
    assert!(dev <= reference.error_bound, "{dev} > {}", reference.error_bound);
}

#[test]
fn profile_mismatch_is_refused() {
    let model = synth(1, 4, 2, 3);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 1);
    let other = DeploymentProfile { profile_id: "other".into(), ..DeploymentProfile::default() };
    let err = run_user_inference(&addr, &other, &base(&model), &gen_input(3, 4, 1), [3; 16]).err().unwrap();
    assert_eq!(err.remote_code(), Some(ErrorCode::ProfileMismatch));
    assert_eq!(server.join().unwrap()[0].error_code, Some(ErrorCode::ProfileMismatch));
}

#[test]
fn unknown_module_and_bad_dims() {
    let model = synth(1, 4, 2, 4);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 2);
    let p = DeploymentProfile::default();

    let mut s = UserSession::connect(TcpStream::connect(&addr).unwrap(), p.clone(), [4; 16]).unwrap();
    let err = s.activation(5, &gen_input(4, 4, 1)).unwrap_err();
    assert!(matches!(err, MpiError::Protocol(_)));
    // bypass the client-side check
    let mut raw = TcpStream::connect(&addr).unwrap();
    let _ = UserSession::connect(raw.try_clone().unwrap(), p, [5; 16]).unwrap();
    wire::write_message(&mut raw, &Message::ActRequest { module_id: 9, x: crate::tensorio::Tensor::F32 { shape: vec![4, 1], data: vec![0.0; 4] } }).unwrap();
    match wire::read_message(&mut raw).unwrap() {
        Message::Error { code, .. } => assert_eq!(code, ErrorCode::UnknownModule as u16),
        m => panic!("{m:?}"),
    }
    drop(s);
    drop(raw);
    let outcomes = server.join().unwrap();
    assert!(outcomes.iter().any(|o| o.error_code == Some(ErrorCode::UnknownModule)));
}

#[test]
fn dimension_mismatch_over_wire() {
    let model = synth(1, 4, 2, 5);
    let c = contributor(&model, OpeningBudget::new(None), ContributorConfig::default());
    let (addr, server) = spawn(c, 1);
    let mut raw = TcpStream::connect(&addr).unwrap();
    let _ = UserSession::connect(raw.try_clone().unwrap(), DeploymentProfile::default(), [6; 16]).unwrap();
    wire::write_message(&mut raw, &Message::ActRequest { module_id: 0, x: crate::tensorio::Tensor::F32 { shape: vec![3, 1], data: vec![0.0; 3] } }).unwrap();
    match wire::read_message(&mut raw).unwrap() {
        Message::Error { code, .. } => assert_eq!(code, ErrorCode::DimMismatch as u16),
        m => panic!("{m:?}"),
    }
    drop(raw);
    server.join().unwrap();
}

#[test]
fn zero_lora_model_accepts_vacuously() {
    let spec = SyntheticSpec { lora_targets: vec![], ..SyntheticSpec::small(2, 6, 2, 7) };
    let model = gen_synthetic(&spec).unwrap();
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 1);
    let b = base(&model);
    let x = gen_input(7, 6, 3);
    let out = run_user_inference(&addr, &DeploymentProfile::default(), &b, &x, [7; 16]).unwrap();
    assert!(out.accepted());
    assert_eq!(out.session.report.num_modules, 0);
    assert_eq!(server.join().unwrap()[0].activations, 0);
    let routes = b.routes(&model.manifest).unwrap();
    assert!(routes.iter().all(|r| *r == Route::Local));
    assert_eq!(out.output, b.forward(&routes, &x, |_, _| unreachable!()).unwrap());
}

#[test]
fn identity_base_and_zero_adapter_passes_input_through() {
    let mut model = synth(1, 5, 2, 8);
    let w = &model.config.layers[0].slots[0].weight;
    model.base_tensors.insert(w.clone(), crate::tensorio::Tensor::from_matrix(&FloatMatrix::identity(5)));
    model.weights.modules[0].a = FloatMatrix::zeros(2, 5);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 1);
    let x = gen_input(8, 5, 4);
    let out = run_user_inference(&addr, &DeploymentProfile::default(), &base(&model), &x, [8; 16]).unwrap();
    server.join().unwrap();
    assert!(out.accepted());
    assert_eq!(out.output, x);
}

/// Tees every byte the contributor writes.
struct Recorder {
    inner: TcpStream,
    log: Arc<Mutex<Vec<u8>>>,
}

impl Read for Recorder {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.inner.read(buf)
    }
}

impl Write for Recorder {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.log.lock().unwrap().extend_from_slice(&buf[..n]);
        Ok(n)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn contributor_never_sends_weights_or_blinders() {
    let model = synth(2, 8, 4, 9);
    let c = contributor(&model, OpeningBudget::new(None), ContributorConfig::default());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let server = {
        let (c, log) = (Arc::clone(&c), Arc::clone(&log));
        thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            c.handle_session(Recorder { inner: s, log })
        })
    };
    let out = run_user_inference(&addr.to_string(), &DeploymentProfile::default(), &base(&model), &gen_input(9, 8, 3), [9; 16]).unwrap();
    assert!(out.accepted());
    server.join().unwrap();
    let log = log.lock().unwrap();
    assert!(log.len() > 1000);
    for id in 0..2 {
        let s = c.secrets(id).unwrap();
        for b in s.commitments.a.blinders.iter().chain(&s.commitments.b.blinders) {
            assert!(!contains(&log, &b.to_bytes()));
        }
        for m in [&s.a_q, &s.b_q] {
            for row in 0..m.rows {
                let bytes: Vec<u8> = m.row(row).iter().flat_map(|v| v.to_le_bytes()).collect();
                assert!(!contains(&log, &bytes));
                let be: Vec<u8> = m.row(row).iter().flat_map(|v| v.to_be_bytes()).collect();
                assert!(!contains(&log, &be));
            }
        }
        let pair = &model.weights.modules[id as usize];
        let a_bytes: Vec<u8> = pair.a.data[..pair.a.cols].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert!(!contains(&log, &a_bytes));
    }
}

#[test]
fn offline_paths_match_online() {
    let model = synth(3, 8, 4, 10);
    let dir = tempfile::tempdir().unwrap();
    let config = ContributorConfig { budget_path: Some(dir.path().join("budget.json")), witness_dir: Some(dir.path().join("witness")) };
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), config), 2);
    let b = base(&model);
    let p = DeploymentProfile::default();
    let out = run_user_inference(&addr, &p, &b, &gen_input(10, 8, 2), [10; 16]).unwrap();
    let other = run_user_inference(&addr, &p, &b, &gen_input(11, 8, 2), [11; 16]).unwrap();
    server.join().unwrap();
    assert!(out.accepted() && other.accepted());

    let session_dir = dir.path().join("session");
    write_session_dir(&session_dir, &out.session.record, &out.session.witnesses).unwrap();
    let witness_dir = dir.path().join("witness").join(hex::encode([10u8; 16]));
    let proof_dir = dir.path().join("proofs");
    let mut budget = OpeningBudget::load(&dir.path().join("budget.json")).unwrap();
    let files = offline_prove(&witness_dir, &proof_dir, &mut budget).unwrap();
    assert_eq!(files.len(), 3);
    for (i, f) in files.iter().enumerate() {
        assert_eq!(std::fs::read(f).unwrap(), out.session.proofs[i], "module {i}");
    }
    // re-proving a recorded session charges nothing
    assert_eq!(budget, OpeningBudget::load(&dir.path().join("budget.json")).unwrap());

    let report = offline_verify(&proof_dir, &session_dir).unwrap();
    assert!(report.accepted());
    assert_eq!(report.num_modules, out.session.report.num_modules);

    // the contributor's cache is also a valid session directory
    assert!(offline_verify(&proof_dir, &witness_dir).unwrap().accepted());

    std::fs::remove_file(&files[1]).unwrap();
    let report = offline_verify(&proof_dir, &session_dir).unwrap();
    assert_eq!(report.failing_modules(), vec![1]);
    assert_eq!(report.modules[1].failure, Some(FailureReason::MissingProof));

    let other_dir = dir.path().join("other");
    let mut record = other.session.record.clone();
    record.session_id = out.session.record.session_id.clone();
    write_session_dir(&other_dir, &record, &other.session.witnesses).unwrap();
    let report = offline_verify(&proof_dir, &other_dir).unwrap();
    assert!(report.modules.iter().filter(|m| m.module_id != 1).all(|m| m.failure == Some(FailureReason::DigestMismatch)));

    std::fs::write(proof_dir.join(proof_file_name(0)), b"ZKLPjunk").unwrap();
    let report = offline_verify(&proof_dir, &session_dir).unwrap();
    assert_eq!(report.modules[0].failure, Some(FailureReason::CorruptProofFile));
}

#[test]
fn budget_refusal_over_wire() {
    let model = synth(1, 8, 8, 12);
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), ContributorConfig::default()), 5);
    let b = base(&model);
    let p = DeploymentProfile::default();
    for i in 0..4u8 {
        let out = run_user_inference(&addr, &p, &b, &gen_input(i as u64, 8, 2), [i; 16]).unwrap();
        assert!(out.accepted());
    }
    let err = run_user_inference(&addr, &p, &b, &gen_input(4, 8, 2), [4; 16]).err().unwrap();
    assert_eq!(err.remote_code(), Some(ErrorCode::BudgetExceeded));
    let outcomes = server.join().unwrap();
    assert_eq!(outcomes.iter().filter(|o| o.error_code == Some(ErrorCode::BudgetExceeded)).count(), 1);
}

#[test]
fn user_side_x_digest_matches_contributor() {
    let model = synth(2, 6, 2, 13);
    let dir = tempfile::tempdir().unwrap();
    let config = ContributorConfig { budget_path: None, witness_dir: Some(dir.path().to_path_buf()) };
    let (addr, server) = spawn(contributor(&model, OpeningBudget::new(None), config), 1);
    let x = gen_input(13, 6, 3);
    let out = run_user_inference(&addr, &DeploymentProfile::default(), &base(&model), &x, [13; 16]).unwrap();
    server.join().unwrap();
    let cache = read_witness_cache(&dir.path().join(hex::encode([13u8; 16]))).unwrap();
    assert_eq!(cache.witnesses, out.session.witnesses);
    assert_eq!(out.session.witnesses[&0].x_q, quantize(&x, 12).unwrap());
}

#[test]
fn contributor_rejects_mismatched_weights() {
    let model = synth(1, 4, 2, 14);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let bad = LoraWeights { modules: vec![] };
    assert!(Contributor::new(DeploymentProfile::default(), model.manifest.clone(), &bad, OpeningBudget::new(None), ContributorConfig::default(), &mut rng).is_err());
    let empty = LoraManifest { model_id: "x".into(), modules: vec![] };
    assert!(Contributor::new(DeploymentProfile::default(), empty, &bad, OpeningBudget::new(None), ContributorConfig::default(), &mut rng).is_ok());
}

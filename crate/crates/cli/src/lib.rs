//! `zklora` command line.
//!
//! Exit codes: 0 success or Accept, 1 verification Reject, 2 usage or
//! configuration error, 3 runtime or protocol error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use serde::Deserialize;

use zklora_bench::{compare_reference, reference_table, run_scaling_bench, reference_regimes, write_outputs, BenchSpec, Regime};
use zklora_core::lora_proof::{decode_proof, OpeningBudget, VerificationReport};
use zklora_core::mpi::{self, BaseModel, Contributor, ContributorConfig};
use zklora_core::tensorio::{
    gen_input, gen_synthetic, read_json, read_tensors, write_json, write_tensors, LoraManifest, LoraWeights, SyntheticSpec, Tensor,
    INPUT_FILE, INPUT_TENSOR, LORA_MANIFEST_FILE, LORA_TENSORS_FILE, MODEL_CONFIG_FILE, MODEL_TENSORS_FILE, OUTPUT_TENSOR,
};
use zklora_core::DeploymentProfile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "zklora", version, about = "Verifiable remote LoRA inference")]
struct Cli {
    /// JSON file with per-subcommand defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic base model, adapters and input.
    GenModel(GenModelArgs),
    /// Serve adapter deltas and proofs.
    Contribute(ContributeArgs),
    /// Run a forward pass against a contributor and verify its proofs.
    Infer(InferArgs),
    /// Re-prove a persisted witness cache.
    Prove(ProveArgs),
    /// Verify a directory of proof files against session records.
    Verify(VerifyArgs),
    /// Run the scaling benchmark.
    Bench(BenchArgs),
}

/// Per-subcommand sections of the `--config` file.
#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    gen_model: Option<GenModelArgs>,
    contribute: Option<ContributeArgs>,
    infer: Option<InferArgs>,
    prove: Option<ProveArgs>,
    verify: Option<VerifyArgs>,
    bench: Option<BenchArgs>,
}

/// Fills every unset field of `$flags` from `$file`.
macro_rules! merge {
    ($flags:expr, $file:expr; $($field:ident),+) => {
        if let Some(file) = $file {
            $( if $flags.$field.is_none() { $flags.$field = file.$field; } )+
        }
    };
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct GenModelArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    rank: Option<u32>,
    /// Activation columns of the generated input (batch x sequence length).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale_bits: Option<u32>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ContributeArgs {
    #[arg(long)]
    listen: Option<String>,
    /// Directory holding the adapter tensors.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Openings allowed per commitment set; defaults to floor(r/2).
    #[arg(long)]
    budget: Option<u32>,
    /// Persist the opening budget here.
    #[arg(long)]
    budget_file: Option<PathBuf>,
    /// Persist each session's witness cache under this directory.
    #[arg(long)]
    witness_dir: Option<PathBuf>,
    /// Stop after this many sessions.
    #[arg(long)]
    max_sessions: Option<usize>,
    #[arg(long)]
    scale_bits: Option<u32>,
    /// Derive blinders from a seed. Breaks hiding; tests only.
    #[arg(long)]
    insecure_seed: Option<u64>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct InferArgs {
    #[arg(long)]
    connect: Option<String>,
    /// Directory with the base model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Tensor file holding the input `x`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output tensor file (tensor `h`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Persist activation records for offline verification.
    #[arg(long)]
    session_dir: Option<PathBuf>,
    /// Save the received proof files.
    #[arg(long)]
    proofs_out: Option<PathBuf>,
    /// 16-byte hex session id; random by default.
    #[arg(long)]
    session_id: Option<String>,
    #[arg(long)]
    scale_bits: Option<u32>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ProveArgs {
    #[arg(long)]
    witness: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    budget_file: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct VerifyArgs {
    #[arg(long)]
    proofs: Option<PathBuf>,
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct BenchArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// `reference` (all six reference regimes), `trend` (four sizes, few modules)
    /// or `modules` (module-count sweep).
    #[arg(long)]
    preset: Option<String>,
    /// JSON bench spec; overrides the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("missing required --{flag}")))
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let file: ConfigFile = match &cli.config {
        Some(path) => {
            let text = std::fs::read(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_slice(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::GenModel(mut a) => {
            merge!(a, file.gen_model; out, layers, dim, rank, m, seed, scale_bits);
            gen_model(a)
        }
        Command::Contribute(mut a) => {
            merge!(a, file.contribute; listen, weights, manifest, budget, budget_file, witness_dir, max_sessions, scale_bits, insecure_seed);
            contribute(a)
        }
        Command::Infer(mut a) => {
            merge!(a, file.infer; connect, model, input, out, report, session_dir, proofs_out, session_id, scale_bits);
            infer(a)
        }
        Command::Prove(mut a) => {
            merge!(a, file.prove; witness, out, budget, budget_file);
            prove(a)
        }
        Command::Verify(mut a) => {
            merge!(a, file.verify; proofs, session, report);
            verify(a)
        }
        Command::Bench(mut a) => {
            merge!(a, file.bench; out, preset, spec, repetitions, m, seed);
            bench(a)
        }
    }
}

fn profile(scale_bits: Option<u32>) -> Result<DeploymentProfile, Failure> {
    let p = match scale_bits {
        Some(f) => DeploymentProfile::with_scale_bits(f),
        None => DeploymentProfile::default(),
    };
    p.validate().map_err(usage)?;
    Ok(p)
}

fn gen_model(a: GenModelArgs) -> Result<i32, Failure> {
    let out = required(a.out, "out")?;
    let mut spec = SyntheticSpec::small(a.layers.unwrap_or(3), a.dim.unwrap_or(64), a.rank.unwrap_or(4), a.seed.unwrap_or(0));
    if let Some(f) = a.scale_bits {
        spec.scale_bits = f;
    }
    let model = gen_synthetic(&spec).map_err(usage)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join(MODEL_CONFIG_FILE), &model.config).context("writing model config")?;
    write_tensors(&out.join(MODEL_TENSORS_FILE), &model.base_tensors).context("writing model tensors")?;
    write_json(&out.join(LORA_MANIFEST_FILE), &model.manifest).context("writing manifest")?;
    write_tensors(&out.join(LORA_TENSORS_FILE), &model.lora_tensors()).context("writing adapter tensors")?;
    let dim = model.config.input_dim().unwrap_or(0) as usize;
    let x = gen_input(spec.seed, dim, a.m.unwrap_or(15));
    write_tensors(&out.join(INPUT_FILE), &BTreeMap::from([(INPUT_TENSOR.to_string(), Tensor::from_matrix(&x))]))
        .context("writing input")?;
    eprintln!("wrote {} ({} layers, {} adapters)", out.display(), spec.num_layers, model.manifest.modules.len());
    Ok(EXIT_OK)
}

fn contribute(a: ContributeArgs) -> Result<i32, Failure> {
    let listen = required(a.listen, "listen")?;
    let weights_dir = required(a.weights, "weights")?;
    let manifest_path = required(a.manifest, "manifest")?;
    let profile = profile(a.scale_bits)?;
    let manifest: LoraManifest = read_json(&manifest_path).context("reading manifest")?;
    let tensors = read_tensors(&weights_dir.join(LORA_TENSORS_FILE)).context("reading adapter tensors")?;
    let weights = LoraWeights::load(&manifest, &tensors).context("loading adapters")?;
    let budget = match &a.budget_file {
        Some(p) => OpeningBudget::load_or_new(p, a.budget).context("loading budget")?,
        None => OpeningBudget::new(a.budget),
    };
    let config = ContributorConfig { budget_path: a.budget_file, witness_dir: a.witness_dir };
    let contributor = match a.insecure_seed {
        Some(seed) => {
            eprintln!("warning: blinders derived from --insecure-seed; commitments do not hide the weights");
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            Contributor::new(profile, manifest, &weights, budget, config, &mut rng)
        }
        None => Contributor::new(profile, manifest, &weights, budget, config, &mut OsRng),
    }
    .context("preparing commitments")?;
    let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
    let addr = listener.local_addr().context("reading bound address")?;
    eprintln!(
        "listening on {addr} ({} modules, commitments in {:.1} ms)",
        contributor.manifest().modules.len(),
        contributor.settings().generators_ms + contributor.settings().commit_ms.iter().sum::<f64>()
    );
    let outcomes = mpi::serve(listener, Arc::new(contributor), a.max_sessions).context("serving")?;
    for o in &outcomes {
        let id = o.session_id.map(hex::encode).unwrap_or_else(|| "-".into());
        match &o.error {
            Some(e) => eprintln!("session {id}: ended with error: {e}"),
            None => eprintln!("session {id}: {} activations, {} proofs", o.activations, o.proofs_sent),
        }
    }
    Ok(EXIT_OK)
}

fn parse_session_id(s: &str) -> Result<[u8; 16], Failure> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| usage("--session-id must be 32 hex characters"))
}

fn write_report(path: Option<&Path>, report: &VerificationReport) -> anyhow::Result<()> {
    if let Some(p) = path {
        let mut bytes = report.to_json();
        bytes.push(b'\n');
        std::fs::write(p, bytes).with_context(|| format!("writing report {}", p.display()))?;
    }
    Ok(())
}

fn verdict(report: &VerificationReport) -> i32 {
    if report.accepted() {
        eprintln!("Accept: {} modules verified in {:.1} ms", report.num_modules, report.total_verify_millis);
        EXIT_OK
    } else {
        for m in report.modules.iter().filter(|m| !m.accepted) {
            eprintln!("module {} rejected: {:?}", m.module_id, m.failure);
        }
        eprintln!("Reject: {} of {} modules failed", report.num_failed, report.num_modules);
        EXIT_REJECT
    }
}

fn infer(a: InferArgs) -> Result<i32, Failure> {
    let connect = required(a.connect, "connect")?;
    let model_dir = required(a.model, "model")?;
    let input = required(a.input, "input")?;
    let out = required(a.out, "out")?;
    let profile = profile(a.scale_bits)?;
    let session_id = match &a.session_id {
        Some(s) => parse_session_id(s)?,
        None => {
            let mut id = [0u8; 16];
            OsRng.fill_bytes(&mut id);
            id
        }
    };
    let base = BaseModel::load(&model_dir).context("loading base model")?;
    let tensors = read_tensors(&input).context("reading input")?;
    let x = tensors
        .get(INPUT_TENSOR)
        .ok_or_else(|| anyhow!("input file has no tensor `{INPUT_TENSOR}`"))?
        .to_matrix()
        .context("input tensor")?;
    let outcome = mpi::run_user_inference(&connect, &profile, &base, &x, session_id).context("inference session")?;
    write_tensors(&out, &BTreeMap::from([(OUTPUT_TENSOR.to_string(), Tensor::from_matrix(&outcome.output))]))
        .context("writing output")?;
    let session = &outcome.session;
    if let Some(dir) = &a.session_dir {
        mpi::write_session_dir(dir, &session.record, &session.witnesses).context("writing session records")?;
    }
    if let Some(dir) = &a.proofs_out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, bytes) in session.proofs.iter().enumerate() {
            let id = decode_proof(bytes).map(|p| p.header.module_id).unwrap_or(i as u32);
            std::fs::write(dir.join(mpi::proof_file_name(id)), bytes).context("writing proof file")?;
        }
    }
    write_report(a.report.as_deref(), &session.report)?;
    Ok(verdict(&session.report))
}

fn prove(a: ProveArgs) -> Result<i32, Failure> {
    let witness = required(a.witness, "witness")?;
    let out = required(a.out, "out")?;
    let mut budget = match &a.budget_file {
        Some(p) => OpeningBudget::load_or_new(p, a.budget).context("loading budget")?,
        None => OpeningBudget::new(a.budget),
    };
    let files = mpi::offline_prove(&witness, &out, &mut budget).context("proving")?;
    if let Some(p) = &a.budget_file {
        budget.save(p).context("saving budget")?;
    }
    eprintln!("wrote {} proof files to {}", files.len(), out.display());
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs) -> Result<i32, Failure> {
    let proofs = required(a.proofs, "proofs")?;
    let session = required(a.session, "session")?;
    let report = mpi::offline_verify(&proofs, &session).context("verifying")?;
    write_report(a.report.as_deref(), &report)?;
    Ok(verdict(&report))
}

fn bench_spec(a: &BenchArgs) -> Result<BenchSpec, Failure> {
    let mut spec = match (&a.spec, a.preset.as_deref()) {
        (Some(path), _) => {
            let text = std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_slice(&text).map_err(|e| usage(format!("bench spec: {e}")))?
        }
        (None, None | Some("reference")) => BenchSpec::reference(),
        (None, Some("trend")) => {
            let regimes = [0usize, 1, 3, 5]
                .into_iter()
                .enumerate()
                .map(|(i, k)| Regime { regime_id: i as u32, num_modules: 2, ..reference_regimes()[k].clone() })
                .collect();
            BenchSpec::new(regimes)
        }
        (None, Some("modules")) => BenchSpec::new(
            [8, 16, 32, 48, 80]
                .into_iter()
                .enumerate()
                .map(|(i, k)| Regime { regime_id: i as u32, num_modules: k, n: 512, d: 512, r: 24 })
                .collect(),
        ),
        (None, Some(other)) => return Err(usage(format!("unknown preset {other:?}"))),
    };
    if let Some(r) = a.repetitions {
        spec.repetitions = r;
    }
    if let Some(m) = a.m {
        spec.m = m;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn bench(a: BenchArgs) -> Result<i32, Failure> {
    let spec = bench_spec(&a)?;
    let out_dir = required(a.out, "out")?;
    let out = run_scaling_bench(&spec).context("benchmark")?;
    write_outputs(&out, &out_dir).context("writing bench outputs")?;
    let trend = compare_reference(&out.rows, &reference_table());
    std::fs::write(out_dir.join("trend.json"), serde_json::to_vec_pretty(&trend).context("trend json")?).context("writing trend.json")?;
    for r in &out.rows {
        eprintln!(
            "regime {}: {} x {} params, settings {:.2} ms, proof {:.2} ms, verify {:.2} ms (total {:.1} ms)",
            r.regime_id, r.num_loras, r.avg_lora_size, r.avg_settings_ms, r.avg_proof_ms, r.avg_verify_ms, r.total_verify_ms
        );
    }
    eprintln!("trend agreement: {}", if trend.pass { "PASS" } else { "FAIL" });
    if !trend.pass {
        return Err(anyhow!("trend check failed").into());
    }
    Ok(EXIT_OK)
}

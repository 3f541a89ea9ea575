//! Scaling measurements: verification time against module count, and
//! settings/proof time against adapter size.
//!
//! Each regime generates `num_modules` random adapters of shape
//! `(n, r, d)`. Per module and repetition it times, on separate clocks:
//! settings (commitment of `A` and `B`, plus the key derivation amortized
//! over the regime), proof generation, and verification. Everything runs on
//! one thread.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use zklora_core::commitments::commit_rows;
use zklora_core::field::group_order;
use zklora_core::lora_proof::{prove_module, verify_module, ModuleCheck, ModuleCommitments, ModuleWitness, ProverInputs};
use zklora_core::quantizer::{delta_exact, overflow_check, quantize};
use zklora_core::tensorio::{gen_input, gen_lora_pair, LoraModule};
use zklora_core::{DeploymentProfile, OpeningBudget, PedersenKey};

pub const RESULTS_CSV: &str = "results.csv";
pub const MODULES_CSV: &str = "modules.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// External reference timings, shipped verbatim as data.
pub const REFERENCE_TIMINGS_CSV: &str = include_str!("../data/reference_timings.csv");

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("regime {regime_id} is too large: {reason}")]
    RegimeTooLarge { regime_id: u32, reason: String },
    #[error("invalid bench spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Core(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub regime_id: u32,
    pub num_modules: u32,
    pub n: u32,
    pub d: u32,
    pub r: u32,
}

impl Regime {
    pub fn lora_size(&self) -> u64 {
        self.r as u64 * (self.n as u64 + self.d as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub regimes: Vec<Regime>,
    /// Activation columns per module (batch x sequence length).
    pub m: u32,
    pub repetitions: u32,
    pub seed: u64,
    /// Upper bound on `r·(n+d) + n·m` per module.
    pub max_module_elems: u64,
}

/// `(num_modules, n, d, r)` for the six reference rows; `r·(n+d)` hits each
/// reference average size exactly.
pub fn reference_regimes() -> Vec<Regime> {
    [(24, 512, 512, 24), (48, 768, 768, 32), (32, 1024, 1024, 13), (80, 4096, 4096, 18), (32, 4096, 4096, 20), (32, 4096, 4096, 40)]
        .into_iter()
        .enumerate()
        .map(|(i, (num_modules, n, d, r))| Regime { regime_id: i as u32, num_modules, n, d, r })
        .collect()
}

impl BenchSpec {
    pub fn new(regimes: Vec<Regime>) -> Self {
        BenchSpec { regimes, m: 15, repetitions: 3, seed: 0, max_module_elems: 1 << 26 }
    }

    pub fn reference() -> Self {
        Self::new(reference_regimes())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.regimes.is_empty() {
            return Err(BenchError::InvalidSpec("no regimes".into()));
        }
        if self.repetitions < 3 {
            return Err(BenchError::InvalidSpec("at least 3 repetitions are required".into()));
        }
        if self.m == 0 {
            return Err(BenchError::InvalidSpec("m must be positive".into()));
        }
        let mut ids: Vec<u32> = self.regimes.iter().map(|r| r.regime_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.regimes.len() {
            return Err(BenchError::InvalidSpec("duplicate regime ids".into()));
        }
        for g in &self.regimes {
            if g.num_modules == 0 || g.n == 0 || g.d == 0 || g.r == 0 {
                return Err(BenchError::InvalidSpec(format!("regime {} has a zero dimension", g.regime_id)));
            }
        }
        Ok(())
    }

    /// The memory and field-overflow pre-pass.
    fn check_fits(&self, g: &Regime, scale_bits: u32) -> Result<(), BenchError> {
        let elems = g.lora_size() + g.n as u64 * self.m as u64;
        if elems > self.max_module_elems {
            return Err(BenchError::RegimeTooLarge {
                regime_id: g.regime_id,
                reason: format!("{elems} elements per module exceeds {}", self.max_module_elems),
            });
        }
        // entries are drawn from [-1, 1]
        let q = 1u64 << scale_bits;
        if !overflow_check(g.n as usize, g.r as usize, q, q, q, &group_order()).is_ok() {
            return Err(BenchError::RegimeTooLarge { regime_id: g.regime_id, reason: "field overflow bound".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleTiming {
    pub regime_id: u32,
    pub repetition: u32,
    pub module_id: u32,
    pub num_loras: u32,
    pub lora_size: u64,
    pub settings_ms: f64,
    pub proof_ms: f64,
    pub verify_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub regime_id: u32,
    pub num_loras: u32,
    pub avg_lora_size: u64,
    pub avg_settings_ms: f64,
    pub avg_proof_ms: f64,
    pub avg_verify_ms: f64,
    /// Sum over modules of one repetition, averaged over repetitions.
    pub total_verify_ms: f64,
    pub median_verify_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub crate_version: String,
}

impl HostInfo {
    pub fn current() -> Self {
        HostInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub spec: BenchSpec,
    pub rows: Vec<BenchRow>,
    pub modules: Vec<ModuleTiming>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn core_err(e: impl std::fmt::Display) -> BenchError {
    BenchError::Core(e.to_string())
}

fn run_regime(spec: &BenchSpec, g: &Regime, profile: &DeploymentProfile) -> Result<Vec<ModuleTiming>, BenchError> {
    let (n, r, d, m) = (g.n as usize, g.r as usize, g.d as usize, spec.m as usize);
    let f = profile.scale_bits;
    let module = LoraModule {
        module_id: 0,
        target: "bench".into(),
        n: g.n,
        r: g.r,
        d: g.d,
        scale_bits: f,
        a_tensor: "A".into(),
        b_tensor: "B".into(),
    };
    let mut out = Vec::with_capacity((g.num_modules * spec.repetitions) as usize);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ ((g.regime_id as u64) << 32));
    for rep in 0..spec.repetitions {
        let start = Instant::now();
        let key = PedersenKey::derive(profile, n.max(r));
        let key_ms = ms_since(start) / g.num_modules as f64;
        let mut session_id = [0u8; 16];
        rng.fill_bytes(&mut session_id);
        for module_id in 0..g.num_modules {
            let pair = gen_lora_pair(&mut rng, n, r, d);
            let x = gen_input(rng.next_u64(), n, m);
            let a_q = quantize(&pair.a, f).map_err(core_err)?;
            let b_q = quantize(&pair.b, f).map_err(core_err)?;
            let x_q = quantize(&x, f).map_err(core_err)?;
            let delta_q = delta_exact(&a_q, &b_q, &x_q).map_err(core_err)?;
            let witness = ModuleWitness { x_q, delta_q };

            let start = Instant::now();
            let commitments = ModuleCommitments {
                a: commit_rows(&a_q, &key, &mut rng).map_err(core_err)?,
                b: commit_rows(&b_q, &key, &mut rng).map_err(core_err)?,
            };
            let settings_ms = ms_since(start) + key_ms;

            let inputs = ProverInputs {
                profile,
                session_id,
                module: &module,
                a_q: &a_q,
                b_q: &b_q,
                commitments: &commitments,
                witness: &witness,
            };
            let mut budget = OpeningBudget::new(Some(u32::MAX));
            let start = Instant::now();
            let proof = prove_module(&inputs, &mut budget).map_err(core_err)?;
            let proof_ms = ms_since(start);

            let public = commitments.public();
            let check = ModuleCheck { profile, session_id, module: &module, commitments: &public, key: &key, witness: &witness };
            let start = Instant::now();
            let verdict = verify_module(&proof, &check);
            let verify_ms = ms_since(start);
            if let Err(reason) = verdict {
                return Err(BenchError::Core(format!("honest proof rejected in regime {}: {reason:?}", g.regime_id)));
            }
            out.push(ModuleTiming {
                regime_id: g.regime_id,
                repetition: rep,
                module_id,
                num_loras: g.num_modules,
                lora_size: g.lora_size(),
                settings_ms,
                proof_ms,
                verify_ms,
            });
        }
    }
    Ok(out)
}

/// Aggregates per-module timings into one row per regime, ordered by regime id.
pub fn aggregate(modules: &[ModuleTiming]) -> Vec<BenchRow> {
    let mut by_regime: BTreeMap<u32, Vec<&ModuleTiming>> = BTreeMap::new();
    for t in modules {
        by_regime.entry(t.regime_id).or_default().push(t);
    }
    by_regime
        .into_iter()
        .map(|(regime_id, ts)| {
            let k = ts.len() as f64;
            let mean = |f: fn(&ModuleTiming) -> f64| ts.iter().map(|t| f(t)).sum::<f64>() / k;
            let mut per_rep: BTreeMap<u32, f64> = BTreeMap::new();
            for t in &ts {
                *per_rep.entry(t.repetition).or_default() += t.verify_ms;
            }
            let verifies: Vec<f64> = ts.iter().map(|t| t.verify_ms).collect();
            BenchRow {
                regime_id,
                num_loras: ts[0].num_loras,
                avg_lora_size: ts[0].lora_size,
                avg_settings_ms: mean(|t| t.settings_ms),
                avg_proof_ms: mean(|t| t.proof_ms),
                avg_verify_ms: mean(|t| t.verify_ms),
                total_verify_ms: per_rep.values().sum::<f64>() / per_rep.len() as f64,
                median_verify_ms: median(&verifies),
            }
        })
        .collect()
}

pub fn run_scaling_bench(spec: &BenchSpec) -> Result<BenchOutput, BenchError> {
    spec.validate()?;
    let profile = DeploymentProfile::default();
    for g in &spec.regimes {
        spec.check_fits(g, profile.scale_bits)?;
    }
    let mut regimes = spec.regimes.clone();
    regimes.sort_by_key(|g| g.regime_id);
    let mut modules = Vec::new();
    for g in &regimes {
        modules.extend(run_regime(spec, g, &profile)?);
    }
    Ok(BenchOutput { spec: spec.clone(), rows: aggregate(&modules), modules })
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "regime_id",
            "num_loras",
            "avg_lora_size",
            "avg_settings_ms",
            "avg_proof_ms",
            "avg_verify_ms",
            "total_verify_ms",
            "median_verify_ms",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<BenchRow>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn modules_to_csv(modules: &[ModuleTiming]) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in modules {
        w.serialize(t)?;
    }
    w.into_inner().map_err(|e| BenchError::Io(e.into_error()))
}

/// Writes `results.csv`, `modules.csv` and `summary.json` into `dir`.
pub fn write_outputs(out: &BenchOutput, dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(RESULTS_CSV), rows_to_csv(&out.rows)?)?;
    std::fs::write(dir.join(MODULES_CSV), modules_to_csv(&out.modules)?)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        spec: &'a BenchSpec,
        host: HostInfo,
        rows: &'a [BenchRow],
    }
    let summary = Summary { spec: &out.spec, host: HostInfo::current(), rows: &out.rows };
    std::fs::write(dir.join(SUMMARY_JSON), serde_json::to_vec_pretty(&summary).map_err(core_err)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub base_model: String,
    pub num_loras: u32,
    pub avg_lora_size: u64,
    pub avg_settings: f64,
    pub avg_proof: f64,
}

pub fn parse_reference(text: &str) -> Result<Vec<ReferenceRow>, BenchError> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn reference_table() -> Vec<ReferenceRow> {
    parse_reference(REFERENCE_TIMINGS_CSV).expect("bundled reference table parses")
}

/// Least-squares `y = a·x + b`; returns `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (a * x + b)).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (a, b, r2)
}

/// Means of `value` grouped by `key`, ascending in key.
fn grouped<T>(items: &[T], key: impl Fn(&T) -> u64, value: impl Fn(&T) -> f64) -> Vec<(u64, f64)> {
    let mut g: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for it in items {
        let e = g.entry(key(it)).or_default();
        e.0 += value(it);
        e.1 += 1;
    }
    g.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

fn nondecreasing(series: &[(u64, f64)]) -> bool {
    series.windows(2).all(|w| w[1].1 >= w[0].1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendReport {
    pub settings_monotone: bool,
    pub proof_monotone: bool,
    /// Slope of total verification time against module count, when at least
    /// two distinct counts were measured.
    pub verify_slope_ms_per_module: Option<f64>,
    pub reference_settings_monotone: bool,
    pub reference_proof_monotone: bool,
    pub pass: bool,
}

/// Trend agreement only: settings and proof time nondecreasing in adapter
/// size, and a positive slope of total verification time in module count.
/// Absolute values are never compared. The verdict ignores row order.
pub fn compare_reference(ours: &[BenchRow], reference: &[ReferenceRow]) -> TrendReport {
    let settings = grouped(ours, |r| r.avg_lora_size, |r| r.avg_settings_ms);
    let proof = grouped(ours, |r| r.avg_lora_size, |r| r.avg_proof_ms);
    let verify = grouped(ours, |r| r.num_loras as u64, |r| r.total_verify_ms);
    let slope = (verify.len() >= 2).then(|| {
        let xs: Vec<f64> = verify.iter().map(|(k, _)| *k as f64).collect();
        let ys: Vec<f64> = verify.iter().map(|(_, v)| *v).collect();
        linear_fit(&xs, &ys).0
    });
    let settings_monotone = nondecreasing(&settings);
    let proof_monotone = nondecreasing(&proof);
    TrendReport {
        settings_monotone,
        proof_monotone,
        verify_slope_ms_per_module: slope,
        reference_settings_monotone: nondecreasing(&grouped(reference, |r| r.avg_lora_size, |r| r.avg_settings)),
        reference_proof_monotone: nondecreasing(&grouped(reference, |r| r.avg_lora_size, |r| r.avg_proof)),
        pass: settings_monotone && proof_monotone && slope.is_none_or(|s| s > 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: u32, count: u32, size: u64, settings: f64, proof: f64, total: f64) -> BenchRow {
        BenchRow {
            regime_id: id,
            num_loras: count,
            avg_lora_size: size,
            avg_settings_ms: settings,
            avg_proof_ms: proof,
            avg_verify_ms: total / count as f64,
            total_verify_ms: total,
            median_verify_ms: total / count as f64,
        }
    }

    #[test]
    fn reference_regimes_hit_reference_sizes() {
        let reference = reference_table();
        let regimes = reference_regimes();
        assert_eq!(reference.len(), 6);
        for (g, r) in regimes.iter().zip(&reference) {
            assert_eq!(g.num_modules, r.num_loras);
            assert_eq!(g.lora_size(), r.avg_lora_size);
        }
        assert_eq!(
            regimes.iter().map(|g| g.lora_size()).collect::<Vec<_>>(),
            vec![24576, 49152, 26624, 147456, 163840, 327680]
        );
    }

    #[test]
    fn reference_trend_is_monotone_on_trend_sizes() {
        let reference = reference_table();
        let subset: Vec<ReferenceRow> =
            reference.into_iter().filter(|r| [24576, 49152, 147456, 327680].contains(&r.avg_lora_size)).collect();
        let settings: Vec<f64> = subset.iter().map(|r| r.avg_settings).collect();
        let proof: Vec<f64> = subset.iter().map(|r| r.avg_proof).collect();
        assert_eq!(settings, vec![38.0, 43.6, 54.9, 86.1]);
        assert_eq!(proof, vec![31.6, 34.9, 46.9, 73.7]);
        let ours: Vec<BenchRow> =
            subset.iter().enumerate().map(|(i, r)| row(i as u32, r.num_loras, r.avg_lora_size, r.avg_settings, r.avg_proof, 1.0 + i as f64)).collect();
        let report = compare_reference(&ours, &reference_table());
        assert!(report.settings_monotone && report.proof_monotone);
        // the full reference table dips between the two smallest sizes
        assert!(!report.reference_settings_monotone);
    }

    #[test]
    fn constant_time_data_fails_trend() {
        let ours: Vec<BenchRow> = (0..4).map(|i| row(i, 8, 1000 * (i as u64 + 1), 5.0, 5.0, 10.0)).collect();
        let report = compare_reference(&ours, &reference_table());
        assert!(report.settings_monotone);
        assert_eq!(report.verify_slope_ms_per_module, None);
        let ours: Vec<BenchRow> = (0..4).map(|i| row(i, 8 * (i + 1), 1000 * (i as u64 + 1), 5.0, 5.0, 10.0)).collect();
        let report = compare_reference(&ours, &reference_table());
        assert_eq!(report.verify_slope_ms_per_module, Some(0.0));
        assert!(!report.pass);
        let falling: Vec<BenchRow> = (0..4).map(|i| row(i, 8, 1000 * (i as u64 + 1), 9.0 - i as f64, 5.0, 10.0)).collect();
        assert!(!compare_reference(&falling, &[]).pass);
    }

    #[test]
    fn verdict_ignores_row_order() {
        let ours: Vec<BenchRow> = (0..5).map(|i| row(i, 4 * (i + 1), 100 * (i as u64 + 1), i as f64, 2.0 * i as f64, 3.0 * i as f64 + 1.0)).collect();
        let mut shuffled = ours.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(compare_reference(&ours, &[]), compare_reference(&shuffled, &[]));
        assert!(compare_reference(&ours, &[]).pass);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let mut spec = BenchSpec::new(vec![]);
        assert!(matches!(spec.validate(), Err(BenchError::InvalidSpec(_))));
        spec.regimes = vec![Regime { regime_id: 0, num_modules: 1, n: 4, d: 4, r: 2 }];
        spec.repetitions = 2;
        assert!(spec.validate().is_err());
        spec.repetitions = 3;
        assert!(spec.validate().is_ok());
        spec.max_module_elems = 10;
        assert!(matches!(run_scaling_bench(&spec), Err(BenchError::RegimeTooLarge { regime_id: 0, .. })));
    }

    #[test]
    fn degenerate_run_has_positive_timings() {
        let spec = BenchSpec { m: 2, ..BenchSpec::new(vec![Regime { regime_id: 0, num_modules: 1, n: 8, d: 8, r: 2 }]) };
        let out = run_scaling_bench(&spec).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.modules.len(), 3);
        let r = &out.rows[0];
        assert!(r.avg_settings_ms > 0.0 && r.avg_proof_ms > 0.0 && r.avg_verify_ms > 0.0);
        assert!((r.total_verify_ms - r.avg_verify_ms).abs() < 1e-9);
    }

    #[test]
    fn csv_columns_and_roundtrip() {
        let rows = vec![row(0, 24, 24576, 1.5, 2.5, 30.0), row(1, 48, 49152, 2.0, 3.0, 60.0)];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "regime_id,num_loras,avg_lora_size,avg_settings_ms,avg_proof_ms,avg_verify_ms,total_verify_ms,median_verify_ms"
        );
        assert_eq!(rows_from_csv(&text).unwrap(), rows);
        assert!(rows_to_csv(&[]).unwrap().starts_with("regime_id,"));
    }

    #[test]
    fn outputs_written() {
        let spec = BenchSpec { m: 1, ..BenchSpec::new(vec![Regime { regime_id: 3, num_modules: 2, n: 4, d: 4, r: 1 }]) };
        let out = run_scaling_bench(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let rows = rows_from_csv(&std::fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap()).unwrap();
        assert_eq!(rows, out.rows);
        let modules = std::fs::read_to_string(dir.path().join(MODULES_CSV)).unwrap();
        assert_eq!(modules.lines().count(), 1 + 6);
        let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join(SUMMARY_JSON)).unwrap()).unwrap();
        assert_eq!(summary["spec"]["regimes"][0]["regime_id"], 3);
        assert!(summary["host"]["cpus"].as_u64().unwrap() >= 1);
    }
}

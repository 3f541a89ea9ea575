//! Seeded synthetic base models and adapters. Every entry is uniform in
//! `[-1, 1]` from a ChaCha20 stream, so a seed pins the exact bytes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, LayerConfig, LoraManifest, LoraModule, LoraPair, LoraWeights, ModelConfig, SlotConfig, Tensor, TensorIoError};
use crate::matrix::FloatMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub in_dim: u32,
    pub out_dim: u32,
}

/// Every layer repeats the same slot chain; `lora_targets` names the slots that
/// get an adapter in every layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model_id: String,
    pub seed: u64,
    pub num_layers: usize,
    pub slots: Vec<SlotSpec>,
    pub activation: Activation,
    pub lora_targets: Vec<String>,
    pub rank: u32,
    pub scale_bits: u32,
}

impl SyntheticSpec {
    /// `layers` square `dim x dim` slots named `proj`, all adapted at rank `rank`.
    pub fn small(layers: usize, dim: u32, rank: u32, seed: u64) -> Self {
        SyntheticSpec {
            model_id: format!("synthetic-{layers}x{dim}-r{rank}"),
            seed,
            num_layers: layers,
            slots: vec![SlotSpec { name: "proj".into(), in_dim: dim, out_dim: dim }],
            activation: Activation::Relu,
            lora_targets: vec!["proj".into()],
            rank,
            scale_bits: crate::field::DEFAULT_SCALE_BITS,
        }
    }
}

pub struct SyntheticModel {
    pub config: ModelConfig,
    pub base_tensors: BTreeMap<String, Tensor>,
    pub manifest: LoraManifest,
    pub weights: LoraWeights,
}

impl SyntheticModel {
    pub fn lora_tensors(&self) -> BTreeMap<String, Tensor> {
        self.weights.to_tensors(&self.manifest)
    }
}

fn uniform(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> FloatMatrix {
    FloatMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0f32..=1.0)).collect())
}

/// One adapter `(A: r x n, B: d x r)` drawn from `rng`.
pub fn gen_lora_pair(rng: &mut ChaCha20Rng, n: usize, r: usize, d: usize) -> LoraPair {
    let a = uniform(rng, r, n);
    let b = uniform(rng, d, r);
    LoraPair { a, b }
}

/// An `n x m` activation matrix.
pub fn gen_input(seed: u64, n: usize, m: usize) -> FloatMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x0069_6e70_7574);
    uniform(&mut rng, n, m)
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticModel, TensorIoError> {
    if spec.num_layers == 0 || spec.slots.is_empty() {
        return Err(TensorIoError::Invalid("a model needs at least one layer and one slot".into()));
    }
    if spec.slots.iter().any(|s| s.in_dim == 0 || s.out_dim == 0) {
        return Err(TensorIoError::Invalid("slot dimensions must be positive".into()));
    }
    for t in &spec.lora_targets {
        if !spec.slots.iter().any(|s| &s.name == t) {
            return Err(TensorIoError::Invalid(format!("LoRA target {t} is not a slot")));
        }
    }
    if !spec.lora_targets.is_empty() && spec.rank == 0 {
        return Err(TensorIoError::Invalid("rank must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut layers = Vec::with_capacity(spec.num_layers);
    let mut base_tensors = BTreeMap::new();
    for li in 0..spec.num_layers {
        let mut slots = Vec::with_capacity(spec.slots.len());
        for s in &spec.slots {
            let weight = format!("layers.{li}.{}.weight", s.name);
            let w = uniform(&mut rng, s.out_dim as usize, s.in_dim as usize);
            base_tensors.insert(weight.clone(), Tensor::from_matrix(&w));
            slots.push(SlotConfig { slot_name: s.name.clone(), in_dim: s.in_dim, out_dim: s.out_dim, weight });
        }
        layers.push(LayerConfig { slots });
    }
    let config = ModelConfig { model_id: spec.model_id.clone(), layers, activation: spec.activation };
    config.validate(&base_tensors)?;

    let mut modules = Vec::new();
    let mut pairs = Vec::new();
    for (path, slot) in config.slots() {
        if !spec.lora_targets.contains(&slot.slot_name) {
            continue;
        }
        let module_id = modules.len() as u32;
        let pair = gen_lora_pair(&mut rng, slot.in_dim as usize, spec.rank as usize, slot.out_dim as usize);
        modules.push(LoraModule {
            module_id,
            target: path.clone(),
            n: slot.in_dim,
            r: spec.rank,
            d: slot.out_dim,
            scale_bits: spec.scale_bits,
            a_tensor: format!("lora.{path}.A"),
            b_tensor: format!("lora.{path}.B"),
        });
        pairs.push(pair);
    }
    let manifest = LoraManifest { model_id: spec.model_id.clone(), modules };
    manifest.validate_against(&config)?;
    Ok(SyntheticModel { config, base_tensors, manifest, weights: LoraWeights { modules: pairs } })
}

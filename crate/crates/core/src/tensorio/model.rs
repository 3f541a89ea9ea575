use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{write_atomic, Tensor, TensorIoError};
use crate::matrix::FloatMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotConfig {
    pub slot_name: String,
    pub in_dim: u32,
    pub out_dim: u32,
    /// Name of the `out_dim x in_dim` f32 tensor.
    pub weight: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub slots: Vec<SlotConfig>,
}

/// A sequential chain of linear slots; the activation is applied between layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    pub layers: Vec<LayerConfig>,
    pub activation: Activation,
}

impl ModelConfig {
    /// `("layer.slot", slot)` in forward order.
    pub fn slots(&self) -> impl Iterator<Item = (String, &SlotConfig)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(li, l)| l.slots.iter().map(move |s| (format!("{li}.{}", s.slot_name), s)))
    }

    pub fn input_dim(&self) -> Option<u32> {
        self.layers.first().and_then(|l| l.slots.first()).map(|s| s.in_dim)
    }

    pub fn output_dim(&self) -> Option<u32> {
        self.layers.last().and_then(|l| l.slots.last()).map(|s| s.out_dim)
    }

    /// Checks dimension chaining and that every weight resolves to an
    /// `out_dim x in_dim` f32 tensor.
    pub fn validate(&self, tensors: &BTreeMap<String, Tensor>) -> Result<(), TensorIoError> {
        let mut prev: Option<u32> = None;
        let mut paths = HashSet::new();
        for (path, slot) in self.slots() {
            if slot.in_dim == 0 || slot.out_dim == 0 {
                return Err(TensorIoError::Invalid(format!("slot {path} has a zero dimension")));
            }
            if !paths.insert(path.clone()) {
                return Err(TensorIoError::Invalid(format!("duplicate slot path {path}")));
            }
            if let Some(p) = prev {
                if p != slot.in_dim {
                    return Err(TensorIoError::Invalid(format!("slot {path} expects {} inputs, previous emits {p}", slot.in_dim)));
                }
            }
            prev = Some(slot.out_dim);
            match tensors.get(&slot.weight) {
                Some(Tensor::F32 { shape, .. }) if shape[..] == [slot.out_dim, slot.in_dim] => {}
                Some(_) => return Err(TensorIoError::Invalid(format!("weight {} has the wrong kind or shape", slot.weight))),
                None => return Err(TensorIoError::MissingTensor(slot.weight.clone())),
            }
        }
        Ok(())
    }
}

/// One LoRA adapter: `A` is `r x n`, `B` is `d x r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraModule {
    pub module_id: u32,
    pub target: String,
    pub n: u32,
    pub r: u32,
    pub d: u32,
    pub scale_bits: u32,
    pub a_tensor: String,
    pub b_tensor: String,
}

impl LoraModule {
    pub fn param_count(&self) -> u64 {
        self.r as u64 * (self.n as u64 + self.d as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraManifest {
    pub model_id: String,
    pub modules: Vec<LoraModule>,
}

impl LoraManifest {
    /// Structural checks that need no base model.
    pub fn validate(&self) -> Result<(), TensorIoError> {
        let mut targets = HashSet::new();
        for (i, m) in self.modules.iter().enumerate() {
            if m.module_id as usize != i {
                return Err(TensorIoError::Invalid(format!("module ids must be dense from 0; position {i} holds {}", m.module_id)));
            }
            if m.r == 0 || m.n == 0 || m.d == 0 {
                return Err(TensorIoError::Invalid(format!("module {} has a zero dimension", m.module_id)));
            }
            if !(4..=24).contains(&m.scale_bits) {
                return Err(TensorIoError::Invalid(format!("module {} scale_bits {}", m.module_id, m.scale_bits)));
            }
            if !targets.insert(m.target.as_str()) {
                return Err(TensorIoError::Invalid(format!("target {} is adapted twice", m.target)));
            }
        }
        Ok(())
    }

    /// Also requires every target to exist with matching `(n, d)` and module ids
    /// to ascend in forward order.
    pub fn validate_against(&self, model: &ModelConfig) -> Result<(), TensorIoError> {
        self.validate()?;
        if self.model_id != model.model_id {
            return Err(TensorIoError::Invalid(format!("manifest is for model {}, not {}", self.model_id, model.model_id)));
        }
        let positions: BTreeMap<String, (usize, &SlotConfig)> =
            model.slots().enumerate().map(|(i, (p, s))| (p, (i, s))).collect();
        let mut last = None;
        for m in &self.modules {
            let (pos, slot) = positions
                .get(&m.target)
                .ok_or_else(|| TensorIoError::Invalid(format!("module {} targets unknown slot {}", m.module_id, m.target)))?;
            if slot.in_dim != m.n || slot.out_dim != m.d {
                return Err(TensorIoError::Invalid(format!(
                    "module {} is {}x{} but slot {} is {}x{}",
                    m.module_id, m.d, m.n, m.target, slot.out_dim, slot.in_dim
                )));
            }
            if last.is_some_and(|l| l >= *pos) {
                return Err(TensorIoError::Invalid("module ids must follow forward order".into()));
            }
            last = Some(*pos);
        }
        Ok(())
    }

    pub fn module(&self, id: u32) -> Option<&LoraModule> {
        self.modules.get(id as usize).filter(|m| m.module_id == id)
    }

    /// Generator count covering every committed row: `max(n, r)`.
    pub fn key_length(&self) -> usize {
        self.modules.iter().map(|m| m.n.max(m.r) as usize).max().unwrap_or(1)
    }

    pub fn canonical_json(&self) -> Vec<u8> {
        crate::canonical_json(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoraPair {
    pub a: FloatMatrix,
    pub b: FloatMatrix,
}

/// The contributor's private adapter weights, indexed by module id.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LoraWeights {
    pub modules: Vec<LoraPair>,
}

impl LoraWeights {
    pub fn load(manifest: &LoraManifest, tensors: &BTreeMap<String, Tensor>) -> Result<Self, TensorIoError> {
        manifest.validate()?;
        let mut modules = Vec::with_capacity(manifest.modules.len());
        for m in &manifest.modules {
            let get = |name: &str| {
                tensors
                    .get(name)
                    .ok_or_else(|| TensorIoError::MissingTensor(name.to_string()))
                    .and_then(Tensor::to_matrix)
            };
            let a = get(&m.a_tensor)?;
            let b = get(&m.b_tensor)?;
            if (a.rows, a.cols) != (m.r as usize, m.n as usize) || (b.rows, b.cols) != (m.d as usize, m.r as usize) {
                return Err(TensorIoError::Invalid(format!("module {} weight shapes disagree with manifest", m.module_id)));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(TensorIoError::Invalid(format!("module {} has non-finite weights", m.module_id)));
            }
            modules.push(LoraPair { a, b });
        }
        Ok(LoraWeights { modules })
    }

    pub fn to_tensors(&self, manifest: &LoraManifest) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (m, pair) in manifest.modules.iter().zip(&self.modules) {
            out.insert(m.a_tensor.clone(), Tensor::from_matrix(&pair.a));
            out.insert(m.b_tensor.clone(), Tensor::from_matrix(&pair.b));
        }
        out
    }
}

/// Sorted-key JSON, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TensorIoError> {
    let mut bytes = crate::canonical_json(value);
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, TensorIoError> {
    let bytes = std::fs::read(path).map_err(|e| TensorIoError::Io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| TensorIoError::Invalid(format!("{}: {e}", path.display())))
}

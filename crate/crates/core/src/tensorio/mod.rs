//! Tensor files, model and LoRA manifests, and synthetic model generation.

mod format;
mod model;
mod synth;
mod wire;

use std::io::Write;
use std::path::Path;

pub use format::{decode_tensors, encode_tensors, read_tensors, write_tensors, DType, Tensor, TENSOR_MAGIC, TENSOR_VERSION};
pub use model::{
    read_json, write_json, Activation, LayerConfig, LoraManifest, LoraModule, LoraPair, LoraWeights, ModelConfig,
    SlotConfig,
};
pub use wire::{decode_wire_tensor, encode_wire_tensor, quantized_digest, wire_tensor_bytes, WIRE_DTYPE_F32, WIRE_DTYPE_I64};
pub use synth::{gen_input, gen_lora_pair, gen_synthetic, SlotSpec, SyntheticModel, SyntheticSpec};

pub const MODEL_CONFIG_FILE: &str = "model.json";
pub const MODEL_TENSORS_FILE: &str = "model.zklt";
pub const LORA_MANIFEST_FILE: &str = "lora_manifest.json";
pub const LORA_TENSORS_FILE: &str = "lora.zklt";
pub const INPUT_FILE: &str = "input.zklt";
pub const INPUT_TENSOR: &str = "x";
pub const OUTPUT_TENSOR: &str = "h";

#[derive(Debug, thiserror::Error)]
pub enum TensorIoError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    VersionUnsupported(u16),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("bounds violation: {0}")]
    BoundsViolation(String),
    #[error("content hash mismatch for tensor `{0}`")]
    ChecksumMismatch(String),
    #[error("unexpected tensor kind: {0}")]
    WrongKind(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("invalid model or manifest: {0}")]
    Invalid(String),
}

/// Writes to `<path>.tmp` then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TensorIoError> {
    let io = |e| TensorIoError::Io(path.display().to_string(), e);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

//! The `ZKLT` tensor container.
//!
//! ```text
//! "ZKLT" | version: u16 LE | header_len: u32 LE | header JSON | data
//! ```
//!
//! The header maps tensor name to `{dtype, shape, offset, length, sha256}`, keys
//! sorted; offsets are relative to the start of the data section and tensors are
//! laid out contiguously in name order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, TensorIoError};
use crate::matrix::FloatMatrix;
use crate::quantizer::QuantizedMatrix;

pub const TENSOR_MAGIC: &[u8; 4] = b"ZKLT";
pub const TENSOR_VERSION: u16 = 1;
const PREAMBLE: usize = 4 + 2 + 4;
const MAX_HEADER: usize = 64 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    F32 { shape: Vec<u32>, data: Vec<f32> },
    I64 { shape: Vec<u32>, data: Vec<i64> },
}

impl Tensor {
    pub fn dtype(&self) -> DType {
        match self {
            Tensor::F32 { .. } => DType::F32,
            Tensor::I64 { .. } => DType::I64,
        }
    }

    pub fn shape(&self) -> &[u32] {
        match self {
            Tensor::F32 { shape, .. } | Tensor::I64 { shape, .. } => shape,
        }
    }

    pub fn numel(&self) -> usize {
        match self {
            Tensor::F32 { data, .. } => data.len(),
            Tensor::I64 { data, .. } => data.len(),
        }
    }

    /// Raw little-endian payload.
    pub fn payload_bytes(&self) -> Vec<u8> {
        match self {
            Tensor::F32 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Tensor::I64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn from_payload(dtype: DType, shape: Vec<u32>, bytes: &[u8]) -> Result<Tensor, TensorIoError> {
        let numel = shape_numel(&shape)
            .ok_or_else(|| TensorIoError::BoundsViolation("shape product overflows".into()))?;
        if numel.checked_mul(dtype.size()) != Some(bytes.len()) {
            return Err(TensorIoError::BoundsViolation(format!(
                "payload of {} bytes does not match shape {shape:?}",
                bytes.len()
            )));
        }
        Ok(match dtype {
            DType::F32 => Tensor::F32 {
                shape,
                data: bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            },
            DType::I64 => Tensor::I64 {
                shape,
                data: bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            },
        })
    }

    pub fn from_matrix(m: &FloatMatrix) -> Tensor {
        Tensor::F32 { shape: vec![m.rows as u32, m.cols as u32], data: m.data.clone() }
    }

    pub fn from_quantized(q: &QuantizedMatrix) -> Tensor {
        Tensor::I64 { shape: vec![q.rows as u32, q.cols as u32], data: q.entries.clone() }
    }

    pub fn to_matrix(&self) -> Result<FloatMatrix, TensorIoError> {
        match self {
            Tensor::F32 { shape, data } if shape.len() == 2 => {
                Ok(FloatMatrix::new(shape[0] as usize, shape[1] as usize, data.clone()))
            }
            _ => Err(TensorIoError::WrongKind(format!("expected 2-D f32, got {:?} {:?}", self.dtype(), self.shape()))),
        }
    }

    pub fn to_quantized(&self, scale_exp: u32) -> Result<QuantizedMatrix, TensorIoError> {
        match self {
            Tensor::I64 { shape, data } if shape.len() == 2 => {
                Ok(QuantizedMatrix::new(shape[0] as usize, shape[1] as usize, data.clone(), scale_exp))
            }
            _ => Err(TensorIoError::WrongKind(format!("expected 2-D i64, got {:?} {:?}", self.dtype(), self.shape()))),
        }
    }
}

pub(crate) fn shape_numel(shape: &[u32]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: DType,
    shape: Vec<u32>,
    offset: u64,
    length: u64,
    /// Hex SHA-256 of the payload.
    sha256: String,
}

/// Encodes a named tensor set. Identical content always yields identical bytes.
pub fn encode_tensors(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut header = BTreeMap::new();
    let mut data = Vec::new();
    for (name, t) in tensors {
        let payload = t.payload_bytes();
        header.insert(
            name.clone(),
            HeaderEntry {
                dtype: t.dtype(),
                shape: t.shape().to_vec(),
                offset: data.len() as u64,
                length: payload.len() as u64,
                sha256: hex::encode(crate::sha256(&payload)),
            },
        );
        data.extend_from_slice(&payload);
    }
    let header = crate::canonical_json(&header);
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>, TensorIoError> {
    if bytes.len() < PREAMBLE || &bytes[..4] != TENSOR_MAGIC {
        return Err(TensorIoError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TENSOR_VERSION {
        return Err(TensorIoError::VersionUnsupported(version));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER || PREAMBLE + header_len > bytes.len() {
        return Err(TensorIoError::BoundsViolation("header extends past end of file".into()));
    }
    let header: BTreeMap<String, HeaderEntry> = serde_json::from_slice(&bytes[PREAMBLE..PREAMBLE + header_len])
        .map_err(|e| TensorIoError::CorruptHeader(e.to_string()))?;
    let data = &bytes[PREAMBLE + header_len..];

    let mut spans: Vec<(u64, u64, &str)> = header.iter().map(|(k, e)| (e.offset, e.length, k.as_str())).collect();
    spans.sort_unstable();
    let mut cursor = 0u64;
    for (offset, length, name) in &spans {
        if *offset < cursor {
            return Err(TensorIoError::BoundsViolation(format!("tensor `{name}` overlaps its predecessor")));
        }
        cursor = offset
            .checked_add(*length)
            .filter(|end| *end <= data.len() as u64)
            .ok_or_else(|| TensorIoError::BoundsViolation(format!("tensor `{name}` runs past the data section")))?;
    }
    if cursor != data.len() as u64 {
        return Err(TensorIoError::BoundsViolation("trailing bytes after last tensor".into()));
    }

    let mut out = BTreeMap::new();
    for (name, e) in header {
        let payload = &data[e.offset as usize..(e.offset + e.length) as usize];
        if hex::encode(crate::sha256(payload)) != e.sha256 {
            return Err(TensorIoError::ChecksumMismatch(name));
        }
        let t = Tensor::from_payload(e.dtype, e.shape, payload)?;
        out.insert(name, t);
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<(), TensorIoError> {
    write_atomic(path, &encode_tensors(tensors))
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>, TensorIoError> {
    let bytes = std::fs::read(path).map_err(|e| TensorIoError::Io(path.display().to_string(), e))?;
    decode_tensors(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::F32 { shape: vec![2, 3], data: vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, -7.25, 1e-30] });
        m.insert("q".to_string(), Tensor::I64 { shape: vec![3], data: vec![i64::MIN, 0, i64::MAX] });
        m
    }

    #[test]
    fn roundtrip_bit_identical() {
        let t = sample();
        let bytes = encode_tensors(&t);
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(encode_tensors(&back), bytes);
        match (&t["w"], &back["w"]) {
            (Tensor::F32 { data: a, .. }, Tensor::F32 { data: b, .. }) => {
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
            }
            _ => panic!("dtype changed"),
        }
    }

    #[test]
    fn empty_set() {
        let bytes = encode_tensors(&BTreeMap::new());
        assert_eq!(&bytes[10..], b"{}");
        assert!(decode_tensors(&bytes).unwrap().is_empty());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.zklt");
        write_tensors(&path, &sample()).unwrap();
        assert_eq!(read_tensors(&path).unwrap(), sample());
        assert!(!dir.path().join("t.zklt.tmp").exists());
    }

    #[test]
    fn header_errors() {
        let bytes = encode_tensors(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensors(&bad), Err(TensorIoError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_tensors(&bad), Err(TensorIoError::VersionUnsupported(9))));
        let mut bad = bytes.clone();
        bad[10] = b'[';
        assert!(matches!(decode_tensors(&bad), Err(TensorIoError::CorruptHeader(_))));
        assert!(matches!(decode_tensors(&bytes[..bytes.len() - 1]), Err(TensorIoError::BoundsViolation(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_tensors(&long), Err(TensorIoError::BoundsViolation(_))));
    }

    #[test]
    fn payload_corruption_detected() {
        let bytes = encode_tensors(&sample());
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        for pos in PREAMBLE + header_len..bytes.len() {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x01;
            assert!(matches!(decode_tensors(&bad), Err(TensorIoError::ChecksumMismatch(_))), "pos {pos}");
        }
    }

    proptest! {
        #[test]
        fn roundtrip_random(
            f in proptest::collection::vec(any::<u32>(), 0..40),
            i in proptest::collection::vec(any::<i64>(), 0..40),
        ) {
            let mut m = BTreeMap::new();
            m.insert("a".to_string(), Tensor::F32 { shape: vec![f.len() as u32], data: f.iter().map(|b| f32::from_bits(*b)).collect() });
            m.insert("b".to_string(), Tensor::I64 { shape: vec![1, i.len() as u32], data: i.clone() });
            let bytes = encode_tensors(&m);
            let back = decode_tensors(&bytes).unwrap();
            prop_assert_eq!(encode_tensors(&back), bytes);
        }
    }
}

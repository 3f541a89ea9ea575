//! Tensor encoding used inside wire messages and proof digests:
//! `dtype u8 ‖ rank u8 ‖ dims (u32 BE each) ‖ raw little-endian payload`.

use super::format::shape_numel;
use super::{DType, Tensor, TensorIoError};
use crate::quantizer::QuantizedMatrix;

pub const WIRE_DTYPE_F32: u8 = 0;
pub const WIRE_DTYPE_I64: u8 = 1;

pub fn encode_wire_tensor(t: &Tensor, out: &mut Vec<u8>) {
    out.push(match t.dtype() {
        DType::F32 => WIRE_DTYPE_F32,
        DType::I64 => WIRE_DTYPE_I64,
    });
    out.push(t.shape().len() as u8);
    for d in t.shape() {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&t.payload_bytes());
}

pub fn wire_tensor_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::new();
    encode_wire_tensor(t, &mut out);
    out
}

/// Decodes one tensor from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_wire_tensor(bytes: &[u8]) -> Result<(Tensor, usize), TensorIoError> {
    let short = || TensorIoError::BoundsViolation("truncated wire tensor".into());
    let (&dtype, rest) = bytes.split_first().ok_or_else(short)?;
    let dtype = match dtype {
        WIRE_DTYPE_F32 => DType::F32,
        WIRE_DTYPE_I64 => DType::I64,
        other => return Err(TensorIoError::WrongKind(format!("wire dtype {other}"))),
    };
    let (&rank, rest) = rest.split_first().ok_or_else(short)?;
    let dims_len = rank as usize * 4;
    if rest.len() < dims_len {
        return Err(short());
    }
    let shape: Vec<u32> = rest[..dims_len].chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().unwrap())).collect();
    let numel = shape_numel(&shape).ok_or_else(|| TensorIoError::BoundsViolation("shape product overflows".into()))?;
    let payload_len = numel
        .checked_mul(dtype.size())
        .filter(|l| *l <= rest.len() - dims_len)
        .ok_or_else(short)?;
    let payload = &rest[dims_len..dims_len + payload_len];
    let t = Tensor::from_payload(dtype, shape, payload)?;
    Ok((t, 2 + dims_len + payload_len))
}

/// SHA-256 of the wire encoding of a quantized matrix (as an i64 tensor).
pub fn quantized_digest(q: &QuantizedMatrix) -> [u8; 32] {
    crate::sha256(&wire_tensor_bytes(&Tensor::from_quantized(q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_layout() {
        let t = Tensor::I64 { shape: vec![1, 2], data: vec![1, -1] };
        let b = wire_tensor_bytes(&t);
        assert_eq!(&b[..10], &[1, 2, 0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(&b[10..18], &1i64.to_le_bytes());
        let (back, used) = decode_wire_tensor(&b).unwrap();
        assert_eq!((back, used), (t, b.len()));
    }

    #[test]
    fn wire_rejects_truncation_and_bad_dtype() {
        let t = Tensor::F32 { shape: vec![3], data: vec![1.0, 2.0, 3.0] };
        let b = wire_tensor_bytes(&t);
        for cut in 0..b.len() {
            assert!(decode_wire_tensor(&b[..cut]).is_err());
        }
        let mut bad = b.clone();
        bad[0] = 7;
        assert!(decode_wire_tensor(&bad).is_err());
        // absurd shape must not allocate
        let huge = [0u8, 2, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff];
        assert!(decode_wire_tensor(&huge).is_err());
    }
}

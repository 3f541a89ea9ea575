//! Framing: `length u32 BE ‖ type u8 ‖ payload`, where `length` counts the type
//! byte and the payload.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::field::DeploymentProfile;
use crate::lora_proof::VerificationReport;
use crate::tensorio::{decode_wire_tensor, encode_wire_tensor, LoraManifest, Tensor};

pub const MAX_FRAME: u32 = 256 << 20;
pub const WIRE_MAGIC: &[u8; 4] = b"ZKLW";
pub const WIRE_VERSION: u16 = 1;

pub mod msg_type {
    pub const HELLO: u8 = 0x01;
    pub const MANIFEST: u8 = 0x02;
    pub const ACT_REQUEST: u8 = 0x03;
    pub const ACT_RESPONSE: u8 = 0x04;
    pub const PROOF_REQUEST: u8 = 0x05;
    pub const PROOF_BUNDLE: u8 = 0x06;
    pub const VERIFY_REPORT: u8 = 0x07;
    pub const ERROR: u8 = 0x7F;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    Protocol = 0x0001,
    ProfileMismatch = 0x0002,
    UnknownModule = 0x0003,
    DimMismatch = 0x0004,
    BudgetExceeded = 0x0005,
    OverflowBound = 0x0006,
    Internal = 0x0007,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        use ErrorCode::*;
        [Protocol, ProfileMismatch, UnknownModule, DimMismatch, BudgetExceeded, OverflowBound, Internal]
            .into_iter()
            .find(|c| *c as u16 == v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    User = 1,
    Contributor = 2,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u16,
    pub role: Role,
    pub session_id: [u8; 16],
    pub profile: DeploymentProfile,
}

/// Setup timings, in milliseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsTimings {
    /// Pedersen key derivation, once per profile.
    pub generators_ms: f64,
    /// `commit_rows` for `A` and `B`, per module id.
    pub commit_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitmentsHex {
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMsg {
    pub session_id: String,
    pub manifest: LoraManifest,
    /// Indexed by module id.
    pub commitments: Vec<CommitmentsHex>,
    pub settings_ms: SettingsTimings,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello(Hello),
    Manifest(ManifestMsg),
    ActRequest { module_id: u32, x: Tensor },
    ActResponse { module_id: u32, delta_q: Tensor, delta: Tensor },
    ProofRequest,
    ProofBundle(Vec<Vec<u8>>),
    VerifyReport(VerificationReport),
    Error { code: u16, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("peer closed the connection")]
    Closed,
    #[error("frame length {0} outside 1..=256 MiB")]
    BadLength(u32),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Hello(_) => msg_type::HELLO,
            Message::Manifest(_) => msg_type::MANIFEST,
            Message::ActRequest { .. } => msg_type::ACT_REQUEST,
            Message::ActResponse { .. } => msg_type::ACT_RESPONSE,
            Message::ProofRequest => msg_type::PROOF_REQUEST,
            Message::ProofBundle(_) => msg_type::PROOF_BUNDLE,
            Message::VerifyReport(_) => msg_type::VERIFY_REPORT,
            Message::Error { .. } => msg_type::ERROR,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error { code: code as u16, message: message.into() }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello(h) => {
                out.extend_from_slice(WIRE_MAGIC);
                out.extend_from_slice(&h.version.to_be_bytes());
                out.push(h.role as u8);
                out.extend_from_slice(&h.session_id);
                out.extend_from_slice(&h.profile.canonical_json());
            }
            Message::Manifest(m) => out = crate::canonical_json(m),
            Message::ActRequest { module_id, x } => {
                out.extend_from_slice(&module_id.to_be_bytes());
                encode_wire_tensor(x, &mut out);
            }
            Message::ActResponse { module_id, delta_q, delta } => {
                out.extend_from_slice(&module_id.to_be_bytes());
                encode_wire_tensor(delta_q, &mut out);
                encode_wire_tensor(delta, &mut out);
            }
            Message::ProofRequest => {}
            Message::ProofBundle(proofs) => {
                out.extend_from_slice(&(proofs.len() as u32).to_be_bytes());
                for p in proofs {
                    out.extend_from_slice(&(p.len() as u32).to_be_bytes());
                    out.extend_from_slice(p);
                }
            }
            Message::VerifyReport(r) => out = r.to_json(),
            Message::Error { code, message } => {
                out.extend_from_slice(&code.to_be_bytes());
                out.extend_from_slice(message.as_bytes());
            }
        }
        out
    }

    /// Full frame including the length prefix.
    pub fn encode_frame(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(payload.len() as u32 + 1).to_be_bytes());
        out.push(self.type_byte());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(ty: u8, payload: &[u8]) -> Result<Message, WireError> {
        let bad = |s: &str| WireError::Malformed(s.to_string());
        let mut cur = Cursor { buf: payload };
        let msg = match ty {
            msg_type::HELLO => {
                if cur.take(4)? != WIRE_MAGIC {
                    return Err(bad("hello magic"));
                }
                let version = cur.u16()?;
                let role = match cur.u8()? {
                    1 => Role::User,
                    2 => Role::Contributor,
                    _ => return Err(bad("hello role")),
                };
                let session_id: [u8; 16] = cur.take(16)?.try_into().unwrap();
                let profile = serde_json::from_slice(cur.rest()).map_err(|e| WireError::Malformed(e.to_string()))?;
                Message::Hello(Hello { version, role, session_id, profile })
            }
            msg_type::MANIFEST => {
                Message::Manifest(serde_json::from_slice(cur.rest()).map_err(|e| WireError::Malformed(e.to_string()))?)
            }
            msg_type::ACT_REQUEST => {
                let module_id = cur.u32()?;
                let x = cur.tensor()?;
                Message::ActRequest { module_id, x }
            }
            msg_type::ACT_RESPONSE => {
                let module_id = cur.u32()?;
                let delta_q = cur.tensor()?;
                let delta = cur.tensor()?;
                Message::ActResponse { module_id, delta_q, delta }
            }
            msg_type::PROOF_REQUEST => Message::ProofRequest,
            msg_type::PROOF_BUNDLE => {
                let count = cur.u32()?;
                let mut proofs = Vec::new();
                for _ in 0..count {
                    let len = cur.u32()? as usize;
                    proofs.push(cur.take(len)?.to_vec());
                }
                Message::ProofBundle(proofs)
            }
            msg_type::VERIFY_REPORT => {
                Message::VerifyReport(serde_json::from_slice(cur.rest()).map_err(|e| WireError::Malformed(e.to_string()))?)
            }
            msg_type::ERROR => {
                let code = cur.u16()?;
                let message = String::from_utf8(cur.rest().to_vec()).map_err(|_| bad("error text is not utf-8"))?;
                Message::Error { code, message }
            }
            other => return Err(WireError::UnknownType(other)),
        };
        if !cur.buf.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(msg)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Malformed("truncated payload".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor, WireError> {
        let (t, used) = decode_wire_tensor(self.buf).map_err(|e| WireError::Malformed(e.to_string()))?;
        self.buf = &self.buf[used..];
        Ok(t)
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    w.write_all(&msg.encode_frame())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean EOF before the length prefix is [`WireError::Closed`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(WireError::Malformed("truncated length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len);
    if len == 0 || len > MAX_FRAME {
        return Err(WireError::BadLength(len));
    }
    // never preallocate from an untrusted length
    let mut body = Vec::new();
    r.take(len as u64).read_to_end(&mut body)?;
    if body.len() != len as usize {
        return Err(WireError::Malformed("truncated frame".into()));
    }
    Message::decode(body[0], &body[1..])
}

//! On-disk session directories.
//!
//! Both parties write `session.json` (profile, session id, manifest, public
//! commitments) and `records.zklt` holding `m{id}.x_q` and `m{id}.delta_q` per
//! module. The contributor's witness cache adds `m{id}.a_q`, `m{id}.b_q` to the
//! tensors and the commitment blinders in `blinders.json`; it is secret.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wire::CommitmentsHex;
use super::MpiError;
use crate::commitments::{CommitmentSet, PublicCommitments};
use crate::field::{DeploymentProfile, FieldElement};
use crate::lora_proof::{ModuleCommitments, ModuleWitness, PublicModuleCommitments};
use crate::quantizer::QuantizedMatrix;
use crate::tensorio::{read_json, read_tensors, write_json, write_tensors, LoraManifest, Tensor, TensorIoError};

pub const SESSION_FILE: &str = "session.json";
pub const RECORDS_FILE: &str = "records.zklt";
pub const BLINDERS_FILE: &str = "blinders.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub profile: DeploymentProfile,
    pub session_id: String,
    pub manifest: LoraManifest,
    pub commitments: Vec<CommitmentsHex>,
}

impl SessionRecord {
    pub fn session_bytes(&self) -> Result<[u8; 16], MpiError> {
        hex::decode(&self.session_id)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| MpiError::Protocol(format!("session id {:?} is not 16 hex bytes", self.session_id)))
    }

    pub fn public_commitments(&self) -> Result<Vec<PublicModuleCommitments>, MpiError> {
        self.commitments
            .iter()
            .map(|c| {
                Ok(PublicModuleCommitments { a: PublicCommitments::from_hex(&c.a)?, b: PublicCommitments::from_hex(&c.b)? })
            })
            .collect()
    }
}

pub fn commitments_hex(c: &PublicModuleCommitments) -> CommitmentsHex {
    CommitmentsHex { a: c.a.to_hex(), b: c.b.to_hex() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuleBlinders {
    module_id: u32,
    a: Vec<String>,
    b: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlindersFile {
    modules: Vec<ModuleBlinders>,
}

/// Secret per-module material the contributor needs to prove offline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleSecrets {
    pub a_q: QuantizedMatrix,
    pub b_q: QuantizedMatrix,
    pub commitments: ModuleCommitments,
}

pub struct WitnessCache {
    pub record: SessionRecord,
    pub witnesses: BTreeMap<u32, ModuleWitness>,
    pub secrets: BTreeMap<u32, ModuleSecrets>,
}

fn witness_tensors(witnesses: &BTreeMap<u32, ModuleWitness>) -> BTreeMap<String, Tensor> {
    let mut t = BTreeMap::new();
    for (id, w) in witnesses {
        t.insert(format!("m{id}.x_q"), Tensor::from_quantized(&w.x_q));
        t.insert(format!("m{id}.delta_q"), Tensor::from_quantized(&w.delta_q));
    }
    t
}

fn quantized(tensors: &BTreeMap<String, Tensor>, name: &str, scale_exp: u32) -> Result<QuantizedMatrix, TensorIoError> {
    tensors.get(name).ok_or_else(|| TensorIoError::MissingTensor(name.into()))?.to_quantized(scale_exp)
}

fn module_ids(tensors: &BTreeMap<String, Tensor>) -> Vec<u32> {
    let mut ids: Vec<u32> = tensors
        .keys()
        .filter_map(|k| k.strip_prefix('m')?.strip_suffix(".x_q")?.parse().ok())
        .collect();
    ids.sort_unstable();
    ids
}

pub fn write_session_dir(dir: &Path, record: &SessionRecord, witnesses: &BTreeMap<u32, ModuleWitness>) -> Result<(), MpiError> {
    std::fs::create_dir_all(dir).map_err(|e| TensorIoError::Io(dir.display().to_string(), e))?;
    write_json(&dir.join(SESSION_FILE), record)?;
    write_tensors(&dir.join(RECORDS_FILE), &witness_tensors(witnesses))?;
    Ok(())
}

pub fn read_session_dir(dir: &Path) -> Result<(SessionRecord, BTreeMap<u32, ModuleWitness>), MpiError> {
    let record: SessionRecord = read_json(&dir.join(SESSION_FILE))?;
    let tensors = read_tensors(&dir.join(RECORDS_FILE))?;
    let mut witnesses = BTreeMap::new();
    for id in module_ids(&tensors) {
        let x_q = quantized(&tensors, &format!("m{id}.x_q"), 1)?;
        let delta_q = quantized(&tensors, &format!("m{id}.delta_q"), 3)?;
        witnesses.insert(id, ModuleWitness { x_q, delta_q });
    }
    Ok((record, witnesses))
}

pub fn write_witness_cache(
    dir: &Path,
    record: &SessionRecord,
    witnesses: &BTreeMap<u32, ModuleWitness>,
    secrets: &BTreeMap<u32, &ModuleSecrets>,
) -> Result<(), MpiError> {
    std::fs::create_dir_all(dir).map_err(|e| TensorIoError::Io(dir.display().to_string(), e))?;
    write_json(&dir.join(SESSION_FILE), record)?;
    let mut tensors = witness_tensors(witnesses);
    let mut blinders = Vec::new();
    for (id, s) in secrets {
        tensors.insert(format!("m{id}.a_q"), Tensor::from_quantized(&s.a_q));
        tensors.insert(format!("m{id}.b_q"), Tensor::from_quantized(&s.b_q));
        let enc = |v: &[FieldElement]| v.iter().map(|e| hex::encode(e.to_bytes())).collect();
        blinders.push(ModuleBlinders {
            module_id: *id,
            a: enc(&s.commitments.a.blinders),
            b: enc(&s.commitments.b.blinders),
        });
    }
    write_tensors(&dir.join(RECORDS_FILE), &tensors)?;
    write_json(&dir.join(BLINDERS_FILE), &BlindersFile { modules: blinders })?;
    Ok(())
}

pub fn read_witness_cache(dir: &Path) -> Result<WitnessCache, MpiError> {
    let (record, witnesses) = read_session_dir(dir)?;
    let tensors = read_tensors(&dir.join(RECORDS_FILE))?;
    let blinders: BlindersFile = read_json(&dir.join(BLINDERS_FILE))?;
    let public = record.public_commitments()?;
    let mut secrets = BTreeMap::new();
    for mb in blinders.modules {
        let id = mb.module_id;
        let dec = |v: &[String]| -> Result<Vec<FieldElement>, MpiError> {
            v.iter()
                .map(|h| {
                    let bytes = hex::decode(h).map_err(|_| MpiError::Protocol("blinder is not hex".into()))?;
                    FieldElement::from_slice(&bytes).map_err(|_| MpiError::Protocol("non-canonical blinder".into()))
                })
                .collect()
        };
        let p = public
            .get(id as usize)
            .ok_or_else(|| MpiError::Protocol(format!("blinders for unknown module {id}")))?;
        let commitments = ModuleCommitments {
            a: CommitmentSet { public: p.a.clone(), blinders: dec(&mb.a)? },
            b: CommitmentSet { public: p.b.clone(), blinders: dec(&mb.b)? },
        };
        let a_q = quantized(&tensors, &format!("m{id}.a_q"), 1)?;
        let b_q = quantized(&tensors, &format!("m{id}.b_q"), 1)?;
        secrets.insert(id, ModuleSecrets { a_q, b_q, commitments });
    }
    Ok(WitnessCache { record, witnesses, secrets })
}

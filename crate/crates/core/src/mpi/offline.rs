use std::path::{Path, PathBuf};

use super::records::{read_session_dir, read_witness_cache};
use super::MpiError;
use crate::commitments::PedersenKey;
use crate::lora_proof::{decode_proof, encode_proof, prove_module, verify_entries, BundleContext, OpeningBudget, ProverInputs, VerificationReport};
use crate::tensorio::{write_atomic, TensorIoError};

pub fn proof_file_name(module_id: u32) -> String {
    format!("module_{module_id:04}.zklp")
}

fn parse_proof_file_name(name: &str) -> Option<u32> {
    name.strip_prefix("module_")?.strip_suffix(".zklp")?.parse().ok()
}

/// Re-proves every module in a persisted witness cache into `out_dir`.
/// Output is byte-identical to what the online session sent.
pub fn offline_prove(witness_dir: &Path, out_dir: &Path, budget: &mut OpeningBudget) -> Result<Vec<PathBuf>, MpiError> {
    let cache = read_witness_cache(witness_dir)?;
    let record = &cache.record;
    record.profile.validate()?;
    let session_id = record.session_bytes()?;
    std::fs::create_dir_all(out_dir).map_err(|e| TensorIoError::Io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for (id, witness) in &cache.witnesses {
        let secrets = cache.secrets.get(id).ok_or(MpiError::MissingWitness(*id))?;
        let module = record.manifest.module(*id).ok_or(MpiError::MissingWitness(*id))?;
        let inputs = ProverInputs {
            profile: &record.profile,
            session_id,
            module,
            a_q: &secrets.a_q,
            b_q: &secrets.b_q,
            commitments: &secrets.commitments,
            witness,
        };
        let proof = prove_module(&inputs, budget)?;
        let path = out_dir.join(proof_file_name(*id));
        write_atomic(&path, &encode_proof(&proof))?;
        written.push(path);
    }
    Ok(written)
}

/// Verifies the `module_NNNN.zklp` files in `proof_dir` against a session
/// directory of activation records.
pub fn offline_verify(proof_dir: &Path, session_dir: &Path) -> Result<VerificationReport, MpiError> {
    let (record, witnesses) = read_session_dir(session_dir)?;
    record.profile.validate()?;
    record.manifest.validate()?;
    let io = |e| TensorIoError::Io(proof_dir.display().to_string(), e);
    let mut files = Vec::new();
    for entry in std::fs::read_dir(proof_dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if let Some(id) = entry.file_name().to_str().and_then(parse_proof_file_name) {
            files.push((id, entry.path()));
        }
    }
    files.sort();
    let mut decoded = Vec::with_capacity(files.len());
    for (id, path) in &files {
        let bytes = std::fs::read(path).map_err(|e| TensorIoError::Io(path.display().to_string(), e))?;
        decoded.push((*id, decode_proof(&bytes)));
    }
    // a file named for one module but holding another's proof is a duplicate
    // or unknown-module failure under the header's id
    let entries = decoded
        .iter()
        .map(|(id, d)| match d {
            Ok(p) => (p.header.module_id, Ok(p)),
            Err(e) => (*id, Err(e.clone())),
        })
        .collect();
    let commitments = record.public_commitments()?;
    let key = PedersenKey::derive(&record.profile, record.manifest.key_length());
    let ctx = BundleContext {
        profile: &record.profile,
        session_id: record.session_bytes()?,
        manifest: &record.manifest,
        commitments: &commitments,
        key: &key,
        witnesses: &witnesses,
    };
    Ok(verify_entries(entries, &ctx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(proof_file_name(7), "module_0007.zklp");
        assert_eq!(parse_proof_file_name("module_0123.zklp"), Some(123));
        assert_eq!(parse_proof_file_name("module_12345.zklp"), Some(12345));
        assert_eq!(parse_proof_file_name("module_x.zklp"), None);
        assert_eq!(parse_proof_file_name("other.zklp"), None);
    }
}

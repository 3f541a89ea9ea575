use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_bigint::BigUint;

use super::proof_file::ProofFileError;
use super::prover::{bound_transcript, derive_challenges, mat_vec};
use super::{FailureReason, LoraProof, ModuleResult, ModuleWitness, PublicModuleCommitments, VerificationReport};
use crate::commitments::{combine, verify_opening, PedersenKey};
use crate::field::{group_order, inner_product, DeploymentProfile};
use crate::quantizer::{overflow_check, ENTRY_LIMIT};
use crate::tensorio::{quantized_digest, LoraManifest, LoraModule};

/// Everything the verifier holds for one module: public data and its own
/// copies of `X_q` (recomputed from what it sent) and `Δ_q` (as received).
pub struct ModuleCheck<'a> {
    pub profile: &'a DeploymentProfile,
    pub session_id: [u8; 16],
    pub module: &'a LoraModule,
    pub commitments: &'a PublicModuleCommitments,
    pub key: &'a PedersenKey,
    pub witness: &'a ModuleWitness,
}

fn header_consistent(proof: &LoraProof, ck: &ModuleCheck<'_>) -> bool {
    let h = &proof.header;
    let m = ck.module;
    let w = ck.witness;
    let (n, r, d) = (m.n as usize, m.r as usize, m.d as usize);
    h.profile_id == ck.profile.profile_id
        && h.session_id == hex::encode(ck.session_id)
        && (h.module_id, h.n, h.r, h.d, h.scale_bits) == (m.module_id, m.n, m.r, m.d, m.scale_bits)
        && h.m >= 1
        && (w.x_q.rows, w.x_q.cols) == (n, h.m as usize)
        && (w.delta_q.rows, w.delta_q.cols) == (d, h.m as usize)
        && (ck.commitments.a.rows as usize, ck.commitments.a.cols as usize) == (r, n)
        && (ck.commitments.b.rows as usize, ck.commitments.b.cols as usize) == (d, r)
        && ck.commitments.a.commitments.len() == r
        && ck.commitments.b.commitments.len() == d
        && proof.v.len() == r
        && proof.opening_a.w.len() == n
        && proof.opening_b.w.len() == r
        && ck.key.len() >= n.max(r)
}

/// Accepts iff the header, digests, both openings and both Freivalds
/// equations check. All comparisons are exact field equalities.
pub fn verify_module(proof: &LoraProof, ck: &ModuleCheck<'_>) -> Result<(), FailureReason> {
    if !header_consistent(proof, ck) {
        return Err(FailureReason::HeaderMismatch);
    }
    let h = &proof.header;
    let w = ck.witness;
    let digests_match = h.x_digest == hex::encode(quantized_digest(&w.x_q))
        && h.delta_digest == hex::encode(quantized_digest(&w.delta_q))
        && h.commit_a_digest == hex::encode(ck.commitments.a.digest())
        && h.commit_b_digest == hex::encode(ck.commitments.b.digest());
    if !digests_match {
        return Err(FailureReason::DigestMismatch);
    }

    // Any weights an honest quantizer can produce (|entry| < 2^62) must keep
    // B·A·X inside the centered field range, so the field equation is an
    // integer equation.
    let ceiling = ENTRY_LIMIT as u64;
    let bound = overflow_check(h.n as usize, h.r as usize, ceiling, ceiling, w.x_q.max_abs(), &group_order());
    if !bound.is_ok() || BigUint::from(w.delta_q.max_abs()) >= BigUint::from(ceiling) {
        return Err(FailureReason::OverflowBound);
    }

    let t = bound_transcript(ck.profile, h, ck.module);
    let (ch, _) = derive_challenges(t, h, |_| proof.v.clone());

    let combined_a = combine(&ck.commitments.a.commitments, &ch.s).map_err(|_| FailureReason::HeaderMismatch)?;
    if !verify_opening(ck.key, &combined_a, &proof.opening_a) {
        return Err(FailureReason::OpeningAInvalid);
    }
    let combined_b = combine(&ck.commitments.b.commitments, &ch.r).map_err(|_| FailureReason::HeaderMismatch)?;
    if !verify_opening(ck.key, &combined_b, &proof.opening_b) {
        return Err(FailureReason::OpeningBInvalid);
    }

    let delta_c = mat_vec(&w.delta_q, &ch.c);
    if inner_product(&ch.r, &delta_c) != inner_product(&proof.opening_b.w, &proof.v) {
        return Err(FailureReason::FreivaldsOuterFail);
    }
    let xc = mat_vec(&w.x_q, &ch.c);
    if inner_product(&ch.s, &proof.v) != inner_product(&proof.opening_a.w, &xc) {
        return Err(FailureReason::FreivaldsInnerFail);
    }
    Ok(())
}

/// Session-wide verifier state.
pub struct BundleContext<'a> {
    pub profile: &'a DeploymentProfile,
    pub session_id: [u8; 16],
    pub manifest: &'a LoraManifest,
    /// Indexed by module id.
    pub commitments: &'a [PublicModuleCommitments],
    pub key: &'a PedersenKey,
    pub witnesses: &'a BTreeMap<u32, ModuleWitness>,
}

/// Verifies a bundle against the manifest. Any failure, missing proof or
/// duplicate makes the overall verdict `Reject`.
pub fn verify_bundle(proofs: &[LoraProof], ctx: &BundleContext<'_>) -> VerificationReport {
    let entries: Vec<(u32, Result<&LoraProof, ProofFileError>)> =
        proofs.iter().map(|p| (p.header.module_id, Ok(p))).collect();
    verify_entries(entries, ctx)
}

/// Like [`verify_bundle`], but some entries may be proof files that failed to
/// decode (attributed to the module id their file name carried).
pub fn verify_entries(entries: Vec<(u32, Result<&LoraProof, ProofFileError>)>, ctx: &BundleContext<'_>) -> VerificationReport {
    let mut results: BTreeMap<u32, ModuleResult> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let fail = |id: u32, reason: FailureReason| ModuleResult { module_id: id, accepted: false, failure: Some(reason), verify_millis: 0.0 };

    for (id, entry) in entries {
        if !seen.insert(id) {
            results.insert(id, fail(id, FailureReason::DuplicateModule));
            continue;
        }
        let proof = match entry {
            Ok(p) => p,
            Err(_) => {
                results.insert(id, fail(id, FailureReason::CorruptProofFile));
                continue;
            }
        };
        let (Some(module), Some(commitments)) = (ctx.manifest.module(id), ctx.commitments.get(id as usize)) else {
            results.insert(id, fail(id, FailureReason::UnknownModule));
            continue;
        };
        let Some(witness) = ctx.witnesses.get(&id) else {
            results.insert(id, fail(id, FailureReason::MissingWitness));
            continue;
        };
        let ck = ModuleCheck {
            profile: ctx.profile,
            session_id: ctx.session_id,
            module,
            commitments,
            key: ctx.key,
            witness,
        };
        let start = Instant::now();
        let outcome = verify_module(proof, &ck);
        let verify_millis = start.elapsed().as_secs_f64() * 1e3;
        results.insert(
            id,
            ModuleResult { module_id: id, accepted: outcome.is_ok(), failure: outcome.err(), verify_millis },
        );
    }
    for m in &ctx.manifest.modules {
        results.entry(m.module_id).or_insert_with(|| fail(m.module_id, FailureReason::MissingProof));
    }
    VerificationReport::from_results(hex::encode(ctx.session_id), results.into_values().collect())
}

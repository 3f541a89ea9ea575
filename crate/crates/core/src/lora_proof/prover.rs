use super::budget::{BudgetDecision, OpeningBudget};
use super::{LoraProof, ModuleCommitments, ModuleWitness, ProofHeader};
use crate::commitments::{open_combination, CommitError};
use crate::field::{group_order, DeploymentProfile, FieldElement};
use crate::quantizer::{delta_exact, overflow_check, QuantizedMatrix};
use crate::tensorio::{quantized_digest, LoraModule};
use crate::transcript::{labels, Transcript};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProveError {
    #[error("opening budget exhausted for commitment {matrix}: {used} of {limit} used")]
    BudgetExceeded { matrix: char, used: u32, limit: u32 },
    #[error("delta bound {0} exceeds (p-1)/2")]
    OverflowBound(String),
    #[error("delivered delta disagrees with B·A·X")]
    WitnessMismatch,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Commit(#[from] CommitError),
}

pub struct ProverInputs<'a> {
    pub profile: &'a DeploymentProfile,
    pub session_id: [u8; 16],
    pub module: &'a LoraModule,
    pub a_q: &'a QuantizedMatrix,
    pub b_q: &'a QuantizedMatrix,
    pub commitments: &'a ModuleCommitments,
    pub witness: &'a ModuleWitness,
}

/// Challenge vectors of one proof, in derivation order.
pub(super) struct Challenges {
    pub c: Vec<FieldElement>,
    pub r: Vec<FieldElement>,
    pub s: Vec<FieldElement>,
}

/// Absorbs every public input in the fixed order and returns the transcript
/// positioned just before the first challenge.
pub(super) fn bound_transcript(profile: &DeploymentProfile, header: &ProofHeader, module: &LoraModule) -> Transcript {
    #[derive(serde::Serialize)]
    struct Binding<'a> {
        module: &'a LoraModule,
        m: u32,
        session_id: &'a str,
    }
    let hex32 = |s: &str| hex::decode(s).unwrap_or_default();
    let mut t = Transcript::new();
    let binding = crate::canonical_json(&Binding { module, m: header.m, session_id: &header.session_id });
    // labels are static and short, absorb cannot fail
    t.absorb(labels::PROFILE, &profile.canonical_json()).unwrap();
    t.absorb(labels::MANIFEST, &binding).unwrap();
    t.absorb(labels::COMMIT_A, &hex32(&header.commit_a_digest)).unwrap();
    t.absorb(labels::COMMIT_B, &hex32(&header.commit_b_digest)).unwrap();
    t.absorb(labels::X_DIGEST, &hex32(&header.x_digest)).unwrap();
    t.absorb(labels::DELTA_DIGEST, &hex32(&header.delta_digest)).unwrap();
    t
}

/// `c`, `r`, then `s` after `v` is absorbed.
pub(super) fn derive_challenges(
    mut t: Transcript,
    header: &ProofHeader,
    v_for: impl FnOnce(&[FieldElement]) -> Vec<FieldElement>,
) -> (Challenges, Vec<FieldElement>) {
    let c = t.challenge_vector(labels::CHAL_C, header.m as usize).unwrap();
    let r = t.challenge_vector(labels::CHAL_R, header.d as usize).unwrap();
    let v = v_for(&c);
    t.absorb_field_elements(labels::PROOF_V, &v).unwrap();
    let s = t.challenge_vector(labels::CHAL_S, header.r as usize).unwrap();
    (Challenges { c, r, s }, v)
}

/// `M·vec` over the field for a small-integer matrix.
pub(super) fn mat_vec(m: &QuantizedMatrix, vec: &[FieldElement]) -> Vec<FieldElement> {
    assert_eq!(m.cols, vec.len());
    (0..m.rows)
        .map(|i| {
            m.row(i)
                .iter()
                .zip(vec)
                .filter(|(e, _)| **e != 0)
                .map(|(&e, x)| FieldElement::from_i64(e) * *x)
                .sum()
        })
        .collect()
}

fn check_dims(inputs: &ProverInputs<'_>) -> Result<(), ProveError> {
    let m = inputs.module;
    let (n, r, d) = (m.n as usize, m.r as usize, m.d as usize);
    let w = inputs.witness;
    let cm = inputs.commitments;
    let ok = (inputs.a_q.rows, inputs.a_q.cols) == (r, n)
        && (inputs.b_q.rows, inputs.b_q.cols) == (d, r)
        && w.x_q.rows == n
        && w.x_q.cols >= 1
        && (w.delta_q.rows, w.delta_q.cols) == (d, w.x_q.cols)
        && (cm.a.public.rows as usize, cm.a.public.cols as usize) == (r, n)
        && (cm.b.public.rows as usize, cm.b.public.cols as usize) == (d, r)
        && cm.a.blinders.len() == r
        && cm.b.blinders.len() == d;
    if ok {
        Ok(())
    } else {
        Err(ProveError::DimMismatch(format!("module {} inputs do not match n={n} r={r} d={d}", m.module_id)))
    }
}

/// Builds the proof without checking the witness or the budget. Used directly
/// only for fault injection; [`prove_module`] is the honest entry point.
pub fn assemble_proof(inputs: &ProverInputs<'_>) -> Result<LoraProof, ProveError> {
    check_dims(inputs)?;
    let m = inputs.module;
    let w = inputs.witness;
    let header = ProofHeader {
        profile_id: inputs.profile.profile_id.clone(),
        session_id: hex::encode(inputs.session_id),
        module_id: m.module_id,
        n: m.n,
        r: m.r,
        d: m.d,
        m: w.x_q.cols as u32,
        scale_bits: m.scale_bits,
        x_digest: hex::encode(quantized_digest(&w.x_q)),
        delta_digest: hex::encode(quantized_digest(&w.delta_q)),
        commit_a_digest: hex::encode(inputs.commitments.a.public.digest()),
        commit_b_digest: hex::encode(inputs.commitments.b.public.digest()),
    };
    let t = bound_transcript(inputs.profile, &header, m);
    let (ch, v) = derive_challenges(t, &header, |c| {
        let xc = mat_vec(&w.x_q, c);
        mat_vec(inputs.a_q, &xc)
    });
    let opening_a = open_combination(inputs.a_q, &inputs.commitments.a.blinders, &ch.s)?;
    let opening_b = open_combination(inputs.b_q, &inputs.commitments.b.blinders, &ch.r)?;
    Ok(LoraProof { header, v, opening_a, opening_b })
}

/// Honest prover: checks the overflow bound, recomputes the delta, charges the
/// opening budget of both commitments, then proves.
pub fn prove_module(inputs: &ProverInputs<'_>, budget: &mut OpeningBudget) -> Result<LoraProof, ProveError> {
    check_dims(inputs)?;
    let m = inputs.module;
    let w = inputs.witness;
    let bound = overflow_check(
        m.n as usize,
        m.r as usize,
        inputs.a_q.max_abs(),
        inputs.b_q.max_abs(),
        w.x_q.max_abs(),
        &group_order(),
    );
    if !bound.is_ok() {
        return Err(ProveError::OverflowBound(bound.bound.to_string()));
    }
    let recomputed = delta_exact(inputs.a_q, inputs.b_q, &w.x_q).map_err(|_| ProveError::WitnessMismatch)?;
    if recomputed.entries != w.delta_q.entries {
        return Err(ProveError::WitnessMismatch);
    }

    let opening_key = format!("{}:{}", hex::encode(inputs.session_id), m.module_id);
    let sets = [('A', inputs.commitments.a.public.digest()), ('B', inputs.commitments.b.public.digest())];
    for (matrix, digest) in &sets {
        if budget.is_recorded(digest, &opening_key) {
            continue;
        }
        if let BudgetDecision::Refuse { used, limit } = budget.check(digest, m.r, 1) {
            return Err(ProveError::BudgetExceeded { matrix: *matrix, used, limit });
        }
    }
    let proof = assemble_proof(inputs)?;
    for (_, digest) in &sets {
        budget.record(digest, &opening_key);
    }
    Ok(proof)
}

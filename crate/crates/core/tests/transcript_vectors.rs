//! Replays hash-chain vectors produced by an independent implementation
//! (`data/gen_transcript_vectors.py`).

use serde::Deserialize;
use zklora_core::transcript::Transcript;

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Op {
    Absorb { label: String, data: String, state: String },
    Challenge { label: String, count: usize, values: Vec<String>, state: String },
}

#[derive(Deserialize)]
struct Vectors {
    cases: Vec<Vec<Op>>,
}

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

#[test]
fn transcript_matches_reference_vectors() {
    let vectors: Vectors = serde_json::from_str(include_str!("data/transcript_vectors.json")).unwrap();
    assert!(!vectors.cases.is_empty());
    for (ci, case) in vectors.cases.iter().enumerate() {
        let mut t = Transcript::new();
        for (oi, op) in case.iter().enumerate() {
            match op {
                Op::Absorb { label, data, state } => {
                    t.absorb(&unhex(label), &unhex(data)).unwrap();
                    assert_eq!(hex::encode(t.state()), *state, "case {ci} op {oi}");
                }
                Op::Challenge { label, count, values, state } => {
                    let got = t.challenge_vector(&unhex(label), *count).unwrap();
                    let got: Vec<String> = got.iter().map(|e| hex::encode(e.to_bytes())).collect();
                    assert_eq!(got, *values, "case {ci} op {oi}");
                    assert_eq!(hex::encode(t.state()), *state, "case {ci} op {oi}");
                }
            }
        }
    }
}

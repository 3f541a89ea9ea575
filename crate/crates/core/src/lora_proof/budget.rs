use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tensorio::{read_json, write_json, TensorIoError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetDecision {
    Ok,
    Refuse { used: u32, limit: u32 },
}

/// Openings issued per commitment set, keyed by the hex digest of its public
/// serialization. Each distinct `(session, module)` opening counts once, so
/// re-proving a recorded session reveals nothing new and is free.
///
/// The limit defaults to `floor(r/2)` for a rank-`r` module, keeping the
/// revealed combinations below the rank needed to solve for the matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningBudget {
    pub limit_override: Option<u32>,
    openings: BTreeMap<String, BTreeSet<String>>,
}

impl OpeningBudget {
    pub fn new(limit_override: Option<u32>) -> Self {
        OpeningBudget { limit_override, openings: BTreeMap::new() }
    }

    pub fn limit_for(&self, rank: u32) -> u32 {
        self.limit_override.unwrap_or(rank / 2)
    }

    pub fn used(&self, set_digest: &[u8; 32]) -> u32 {
        self.openings.get(&hex::encode(set_digest)).map_or(0, |s| s.len() as u32)
    }

    pub fn check(&self, set_digest: &[u8; 32], rank: u32, requested: u32) -> BudgetDecision {
        let used = self.used(set_digest);
        let limit = self.limit_for(rank);
        if used.saturating_add(requested) > limit {
            BudgetDecision::Refuse { used, limit }
        } else {
            BudgetDecision::Ok
        }
    }

    pub fn is_recorded(&self, set_digest: &[u8; 32], opening_key: &str) -> bool {
        self.openings.get(&hex::encode(set_digest)).is_some_and(|s| s.contains(opening_key))
    }

    pub fn record(&mut self, set_digest: &[u8; 32], opening_key: &str) {
        self.openings.entry(hex::encode(set_digest)).or_default().insert(opening_key.to_string());
    }

    pub fn load(path: &Path) -> Result<Self, TensorIoError> {
        read_json(path)
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_new(path: &Path, limit_override: Option<u32>) -> Result<Self, TensorIoError> {
        let mut b = if path.exists() { Self::load(path)? } else { Self::new(limit_override) };
        if limit_override.is_some() {
            b.limit_override = limit_override;
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorIoError> {
        write_json(path, self)
    }
}

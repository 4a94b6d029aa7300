//! Deterministic within-participant splits and the leakage check that
//! guards every rendered prompt.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Cohort, CohortError};
use crate::model::TherapyType;
use crate::seeding::scoped_rng;

/// One participant's split: which rated messages condition models and which
/// are held out for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub history_message_ids: Vec<String>,
    pub heldout_message_ids: Vec<String>,
}

/// The persisted split. Key-ordered (BTreeMap) so serialization is
/// byte-stable for a given (cohort, seed, history_size).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub history_size: usize,
    pub stratified: bool,
    pub participants: BTreeMap<String, SplitEntry>,
}

impl SplitManifest {
    pub fn entry(&self, participant_id: &str) -> Option<&SplitEntry> {
        self.participants.get(participant_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CohortError> {
        std::fs::write(path, self.to_json()).map_err(|e| CohortError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CohortError> {
        let text = std::fs::read_to_string(path).map_err(|e| CohortError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| CohortError::Invalid {
            issues: vec![format!("{}: {e}", path.display())],
        })
    }
}

/// Splits each participant's rated messages into `history_size` history
/// items and the remainder held out. Each participant draws from a sub-seed
/// derived from (seed, participant_id), so adding a participant never
/// perturbs the others. The optional stratified mode guarantees at least one
/// CBT and one ACT message in the held-out set when possible.
pub fn make_split(
    cohort: &Cohort,
    seed: u64,
    history_size: usize,
    stratified: bool,
) -> Result<SplitManifest, CohortError> {
    let min_ratings = cohort
        .participants
        .iter()
        .map(|p| cohort.ratings_of(&p.participant_id).len())
        .min()
        .unwrap_or(0);
    if history_size < 1 || history_size >= min_ratings {
        return Err(CohortError::SplitConfig(format!(
            "history_size must satisfy 1 <= history_size < min ratings per participant \
             (got {history_size}, min ratings {min_ratings})"
        )));
    }

    let mut participants = BTreeMap::new();
    for p in &cohort.participants {
        let mut rated: Vec<String> = cohort
            .ratings_of(&p.participant_id)
            .iter()
            .map(|r| r.message_id.clone())
            .collect();
        rated.sort_unstable();
        let heldout_count = rated.len() - history_size;

        let mut rng = scoped_rng(seed, &["split", &p.participant_id]);
        let mut pool = rated.clone();
        pool.shuffle(&mut rng);

        let mut heldout: Vec<String> = if stratified && heldout_count >= 2 {
            let pick = |pool: &[String], therapy: TherapyType| -> Option<String> {
                pool.iter()
                    .find(|id| {
                        cohort.message(id).map(|m| m.therapy_type) == Some(therapy)
                    })
                    .cloned()
            };
            let mut chosen = Vec::new();
            if let Some(cbt) = pick(&pool, TherapyType::Cbt) {
                chosen.push(cbt);
            }
            if let Some(act) = pick(&pool, TherapyType::Act) {
                chosen.push(act);
            }
            pool.retain(|id| !chosen.contains(id));
            let needed = heldout_count.saturating_sub(chosen.len());
            chosen.extend(pool.drain(..needed));
            chosen.truncate(heldout_count);
            chosen
        } else {
            pool.drain(..heldout_count).collect()
        };

        let mut history: Vec<String> = rated
            .iter()
            .filter(|id| !heldout.contains(id))
            .cloned()
            .collect();
        history.sort_unstable();
        heldout.sort_unstable();
        debug_assert_eq!(history.len(), history_size);
        debug_assert_eq!(history.len() + heldout.len(), rated.len());

        participants.insert(
            p.participant_id.clone(),
            SplitEntry { history_message_ids: history, heldout_message_ids: heldout },
        );
    }

    Ok(SplitManifest { seed, history_size, stratified, participants })
}

/// A held-out message surfaced somewhere a prompt must not contain it.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error(
    "leakage in prompt for participant {participant_id}, target {target_message_id}: {}",
    findings.join("; ")
)]
pub struct LeakageError {
    pub participant_id: String,
    pub target_message_id: String,
    pub findings: Vec<String>,
}

/// True when `needle` occurs in `haystack` delimited by non-identifier
/// characters, so id "m0004" does not fire inside "m00042".
fn contains_token(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let bytes = haystack.as_bytes();
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let before_ok = at == 0 || !is_ident(bytes[at - 1]);
        let after_ok = end == bytes.len() || !is_ident(bytes[end]);
        if before_ok && after_ok {
            return true;
        }
        start = at + 1;
    }
    false
}

/// Scans a rendered prompt for the participant's held-out messages. The
/// target message itself is exempt (it legitimately occupies the query
/// slot); every other held-out message's id or text anywhere in the prompt
/// is a failure naming the message.
pub fn assert_no_leakage(
    cohort: &Cohort,
    manifest: &SplitManifest,
    rendered_prompt: &str,
    participant_id: &str,
    target_message_id: &str,
) -> Result<(), LeakageError> {
    let Some(entry) = manifest.entry(participant_id) else {
        return Err(LeakageError {
            participant_id: participant_id.to_string(),
            target_message_id: target_message_id.to_string(),
            findings: vec!["participant missing from split manifest".to_string()],
        });
    };
    let mut findings = Vec::new();
    for heldout_id in &entry.heldout_message_ids {
        if heldout_id == target_message_id {
            continue;
        }
        if contains_token(rendered_prompt, heldout_id) {
            findings.push(format!("held-out message id {heldout_id} appears in prompt"));
        }
        if let Some(msg) = cohort.message(heldout_id) {
            if rendered_prompt.contains(&msg.text) {
                findings.push(format!("held-out message {heldout_id} text appears in prompt"));
            }
        }
    }
    if findings.is_empty() {
        Ok(())
    } else {
        Err(LeakageError {
            participant_id: participant_id.to_string(),
            target_message_id: target_message_id.to_string(),
            findings,
        })
    }
}

//! Deterministic test doubles implementing [`Backend`]: an all-knowing
//! oracle, a constant answerer, a seeded noisy oracle, a fixture replayer,
//! and a history-mean predictor for the history-size sweep.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendResponse, GatewayError};
use crate::cohort::{Cohort, SplitManifest};
use crate::model::{label_of, round_continuous, RatingDomain, ScaleKind};
use crate::prompting::{expected_output_contract, PromptBundle, ValueDomain};
use crate::seeding::scoped_rng;

/// True ordinals per (participant_id, message_id), indexed like
/// [`RatingDomain::ALL`].
pub fn truth_table(cohort: &Cohort) -> HashMap<(String, String), [u8; 4]> {
    cohort
        .ratings
        .iter()
        .map(|r| {
            let mut ords = [0u8; 4];
            for (i, d) in RatingDomain::ALL.iter().enumerate() {
                ords[i] = r.ordinal_for(*d);
            }
            ((r.participant_id.clone(), r.message_id.clone()), ords)
        })
        .collect()
}

/// Builds a contract-compliant JSON reply for a bundle given per-domain
/// ordinals (and optional continuous values for the probability strategy).
fn emit_contract(
    bundle: &PromptBundle,
    ordinals: [u8; 4],
    continuous: Option<[f64; 4]>,
    input_message: Option<&str>,
) -> String {
    let contract = expected_output_contract(bundle.strategy, bundle.prob_mode);
    let mut map = serde_json::Map::new();
    for (key, value_domain) in &contract.keys {
        let value: Value = match (*key, value_domain) {
            ("response_id", _) => json!(bundle.response_id),
            ("input_message", _) => json!(input_message.unwrap_or("")),
            ("image_description", _) => json!("No image was provided."),
            ("explanation", _) => json!("Simulated response."),
            (key, ValueDomain::CategoricalLabel) => {
                let domain = domain_for_key(key);
                json!(label_of(domain, ordinals[idx(domain)]).expect("in range").label())
            }
            (key, ValueDomain::ContinuousScore) => {
                if let Some(domain) = key.strip_prefix("confidence_") {
                    let _ = domain;
                    json!(5.0)
                } else {
                    let domain = domain_for_key(key);
                    let x = continuous
                        .map(|c| c[idx(domain)])
                        .unwrap_or(ordinals[idx(domain)] as f64);
                    json!(x)
                }
            }
            (key, ValueDomain::CategoryLikelihoods) => {
                let domain = domain_for_key(key);
                let chosen = ordinals[idx(domain)];
                let mut table = serde_json::Map::new();
                for (i, label) in domain.scale().labels().iter().enumerate() {
                    table.insert(
                        label.to_string(),
                        json!(if i as u8 + 1 == chosen { 1.0 } else { 0.0 }),
                    );
                }
                Value::Object(table)
            }
            (_, ValueDomain::Echo | ValueDomain::FreeText) => json!(""),
        };
        map.insert(key.to_string(), value);
    }
    serde_json::to_string_pretty(&Value::Object(map)).expect("contract serializes")
}

fn domain_for_key(key: &str) -> RatingDomain {
    match key.rsplit('_').next() {
        Some("content") => RatingDomain::Content,
        Some("design") => RatingDomain::Design,
        Some("coping") => RatingDomain::Coping,
        Some("quitting") => RatingDomain::Quitting,
        _ => unreachable!("prediction key {key} names a domain"),
    }
}

fn idx(domain: RatingDomain) -> usize {
    super::domain_index(domain)
}

/// Answers every query with the participant's true ratings.
pub struct ClairvoyantBackend {
    truths: HashMap<(String, String), [u8; 4]>,
    texts: HashMap<String, String>,
}

impl ClairvoyantBackend {
    pub fn new(cohort: &Cohort) -> Self {
        ClairvoyantBackend {
            truths: truth_table(cohort),
            texts: cohort
                .messages
                .iter()
                .map(|m| (m.message_id.clone(), m.text.clone()))
                .collect(),
        }
    }
}

impl Backend for ClairvoyantBackend {
    fn descriptor(&self) -> String {
        "clairvoyant".to_string()
    }

    fn complete(
        &self,
        _prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let key = (bundle.participant_id.clone(), bundle.target_message_id.clone());
        let ordinals = self.truths.get(&key).ok_or_else(|| GatewayError::Transport {
            attempts: 1,
            last: format!("no ground-truth rating for {key:?}"),
        })?;
        let text = emit_contract(
            bundle,
            *ordinals,
            None,
            self.texts.get(&bundle.target_message_id).map(String::as_str),
        );
        Ok(BackendResponse { text, latency_ms: 0, transport_retries: 0 })
    }
}

/// Always answers the same ordinal, rendered on each domain's scale.
pub struct ConstantBackend {
    ordinal: u8,
    label: String,
}

impl ConstantBackend {
    pub fn from_label(label: &str) -> Result<Self, GatewayError> {
        let ordinal = ScaleKind::Quality
            .ordinal_of_str(label)
            .or_else(|_| ScaleKind::Helpfulness.ordinal_of_str(label))
            .map_err(|_| GatewayError::Fixture {
                path: String::new(),
                detail: format!("constant backend label {label:?} is not canonical on either scale"),
            })?;
        Ok(ConstantBackend { ordinal, label: label.to_string() })
    }
}

impl Backend for ConstantBackend {
    fn descriptor(&self) -> String {
        format!("constant:{}", self.label)
    }

    fn complete(
        &self,
        _prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let text = emit_contract(bundle, [self.ordinal; 4], None, None);
        Ok(BackendResponse { text, latency_ms: 0, transport_retries: 0 })
    }
}

/// Clairvoyant corrupted per domain with probability `error_rate`. Each
/// (response_id, domain) derives its own RNG, so replies do not depend on
/// batch order.
pub struct NoisyOracleBackend {
    truths: HashMap<(String, String), [u8; 4]>,
    error_rate: f64,
    seed: u64,
}

impl NoisyOracleBackend {
    pub fn new(cohort: &Cohort, error_rate: f64, seed: u64) -> Self {
        NoisyOracleBackend { truths: truth_table(cohort), error_rate, seed }
    }
}

impl Backend for NoisyOracleBackend {
    fn descriptor(&self) -> String {
        format!("noisy_oracle:{}:{}", self.error_rate, self.seed)
    }

    fn complete(
        &self,
        _prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let key = (bundle.participant_id.clone(), bundle.target_message_id.clone());
        let truth = self.truths.get(&key).ok_or_else(|| GatewayError::Transport {
            attempts: 1,
            last: format!("no ground-truth rating for {key:?}"),
        })?;
        let mut ordinals = *truth;
        for (i, domain) in RatingDomain::ALL.iter().enumerate() {
            let mut rng = scoped_rng(self.seed, &[&bundle.response_id, domain.name()]);
            if rng.random::<f64>() < self.error_rate {
                // uniform over the four wrong ordinals
                let wrong = rng.random_range(1..=4u8);
                ordinals[i] = if wrong >= truth[i] { wrong + 1 } else { wrong };
            }
        }
        let text = emit_contract(bundle, ordinals, None, None);
        Ok(BackendResponse { text, latency_ms: 0, transport_retries: 0 })
    }
}

/// One recorded reply, optionally with a simulated latency so batch-order
/// experiments stay reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptedResponse {
    pub text: String,
    #[serde(default)]
    pub latency_ms: u64,
}

impl<'de> Deserialize<'de> for ScriptedResponse {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Text(String),
            Full { text: String, #[serde(default)] latency_ms: u64 },
        }
        Ok(match Entry::deserialize(deserializer)? {
            Entry::Text(text) => ScriptedResponse { text, latency_ms: 0 },
            Entry::Full { text, latency_ms } => ScriptedResponse { text, latency_ms },
        })
    }
}

/// Replays a response_id -> raw-response fixture.
pub struct ScriptedBackend {
    fixture: BTreeMap<String, ScriptedResponse>,
    name: String,
}

impl ScriptedBackend {
    pub fn new(fixture: BTreeMap<String, ScriptedResponse>) -> Self {
        ScriptedBackend { fixture, name: "fixture".to_string() }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let fixture: BTreeMap<String, ScriptedResponse> =
            serde_json::from_str(&text).map_err(|e| GatewayError::Fixture {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        Ok(ScriptedBackend {
            fixture,
            name: path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("fixture")
                .to_string(),
        })
    }

    pub fn save_fixture(
        path: &Path,
        fixture: &BTreeMap<String, ScriptedResponse>,
    ) -> Result<(), GatewayError> {
        let text = serde_json::to_string_pretty(fixture).expect("fixture serializes");
        std::fs::write(path, text).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

impl Backend for ScriptedBackend {
    fn descriptor(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn complete(
        &self,
        _prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let entry = self
            .fixture
            .get(&bundle.response_id)
            .ok_or_else(|| GatewayError::MissingFixtureEntry(bundle.response_id.clone()))?;
        Ok(BackendResponse {
            text: entry.text.clone(),
            latency_ms: entry.latency_ms,
            transport_retries: 0,
        })
    }
}

/// Predicts each participant's mean history ordinal per domain - the
/// simplest backend whose accuracy genuinely depends on history size.
pub struct HistoryMeanBackend {
    means: HashMap<String, [f64; 4]>,
}

impl HistoryMeanBackend {
    pub fn new(cohort: &Cohort, manifest: &SplitManifest) -> Self {
        let mut means = HashMap::new();
        for (pid, entry) in &manifest.participants {
            let mut sums = [0.0f64; 4];
            let mut count = 0usize;
            for mid in &entry.history_message_ids {
                if let Some(r) = cohort.rating_of(pid, mid) {
                    for (i, d) in RatingDomain::ALL.iter().enumerate() {
                        sums[i] += r.ordinal_for(*d) as f64;
                    }
                    count += 1;
                }
            }
            if count > 0 {
                for s in &mut sums {
                    *s /= count as f64;
                }
                means.insert(pid.clone(), sums);
            }
        }
        HistoryMeanBackend { means }
    }
}

impl Backend for HistoryMeanBackend {
    fn descriptor(&self) -> String {
        "history_mean".to_string()
    }

    fn complete(
        &self,
        _prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let means = self.means.get(&bundle.participant_id).ok_or_else(|| {
            GatewayError::Transport {
                attempts: 1,
                last: format!("no history for participant {}", bundle.participant_id),
            }
        })?;
        let mut ordinals = [3u8; 4];
        for (i, m) in means.iter().enumerate() {
            ordinals[i] = round_continuous(*m).expect("means are finite");
        }
        let text = emit_contract(bundle, ordinals, Some(*means), None);
        Ok(BackendResponse { text, latency_ms: 0, transport_retries: 0 })
    }
}

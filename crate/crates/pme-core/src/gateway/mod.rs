//! Dispatches rendered prompts to chat-completion backends - a real
//! OpenAI-compatible HTTP endpoint or deterministic test doubles - with
//! response caching, bounded-parallel batches and robust contract parsing.

mod cache;
mod doubles;
mod http;
mod parse;

pub use cache::{cache_key, CacheStats, ResponseCache};
pub use doubles::{
    truth_table, ClairvoyantBackend, ConstantBackend, HistoryMeanBackend, NoisyOracleBackend,
    ScriptedBackend, ScriptedResponse,
};
pub use http::HttpBackend;
pub use parse::{parse_prediction, ParsedOutput};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::model::RatingDomain;
use crate::prompting::{PromptBundle, Strategy};

/// Appended to the prompt on the single parse-failure retry.
pub const JSON_REMINDER: &str = "Respond with only the JSON object.";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("authentication rejected: {0}")]
    Credential(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("scripted fixture has no entry for response_id {0}")]
    MissingFixtureEntry(String),
    #[error("failed to read fixture {path}: {detail}")]
    Fixture { path: String, detail: String },
    #[error("cache I/O error at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One backend reply plus transport bookkeeping. Deterministic backends
/// report a simulated latency so whole records stay reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendResponse {
    pub text: String,
    pub latency_ms: u64,
    pub transport_retries: u32,
}

/// A chat-completion endpoint or test double. Implementations must be
/// thread-safe; `run_batch` calls them from worker threads.
pub trait Backend: Send + Sync {
    /// Stable descriptor used in cache keys, records and report rows.
    fn descriptor(&self) -> String;

    /// Sends `prompt_text` (the bundle is available for doubles that
    /// fabricate contract-shaped replies) and returns the assistant text.
    fn complete(
        &self,
        prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError>;
}

/// Config-file description of a backend. `build` resolves it against the
/// cohort (the oracle doubles need the truth table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// OpenAI-compatible chat-completions endpoint. Requests carry no
    /// sampling-parameter overrides.
    Http {
        base_url: String,
        model: String,
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
    },
    /// Answers with the participant's true ratings.
    Clairvoyant,
    /// Always answers the same ordinal (named by a canonical label from
    /// either scale).
    Constant { label: String },
    /// Clairvoyant with a per-domain corruption probability.
    NoisyOracle { error_rate: f64, seed: u64 },
    /// Replays a recorded response per response_id.
    Scripted { fixture: PathBuf },
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

impl BackendSpec {
    pub fn descriptor(&self) -> String {
        match self {
            BackendSpec::Http { model, .. } => format!("http:{model}"),
            BackendSpec::Clairvoyant => "clairvoyant".to_string(),
            BackendSpec::Constant { label } => format!("constant:{label}"),
            BackendSpec::NoisyOracle { error_rate, seed } => {
                format!("noisy_oracle:{error_rate}:{seed}")
            }
            BackendSpec::Scripted { fixture } => format!(
                "scripted:{}",
                fixture.file_stem().and_then(|s| s.to_str()).unwrap_or("fixture")
            ),
        }
    }

    pub fn build(&self, cohort: &Cohort) -> Result<Box<dyn Backend>, GatewayError> {
        Ok(match self {
            BackendSpec::Http { base_url, model, api_key_env, timeout_secs, max_retries } => {
                if std::env::var(api_key_env).is_err() {
                    return Err(GatewayError::MissingApiKey(api_key_env.clone()));
                }
                Box::new(HttpBackend::new(
                    base_url.clone(),
                    model.clone(),
                    api_key_env.clone(),
                    *timeout_secs,
                    *max_retries,
                ))
            }
            BackendSpec::Clairvoyant => Box::new(ClairvoyantBackend::new(cohort)),
            BackendSpec::Constant { label } => Box::new(ConstantBackend::from_label(label)?),
            BackendSpec::NoisyOracle { error_rate, seed } => {
                Box::new(NoisyOracleBackend::new(cohort, *error_rate, *seed))
            }
            BackendSpec::Scripted { fixture } => Box::new(ScriptedBackend::load(fixture)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

/// One model answer for one (participant, message, strategy) cell, with the
/// raw response retained verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub response_id: String,
    pub participant_id: String,
    pub message_id: String,
    pub strategy: Strategy,
    pub backend: String,
    /// Parsed ordinals indexed like [`RatingDomain::ALL`].
    pub ordinals: [Option<u8>; 4],
    /// Raw continuous scores (probability-style strategy only).
    pub continuous: [Option<f64>; 4],
    pub confidences: [Option<f64>; 4],
    pub raw_response: String,
    pub parse_status: ParseStatus,
    pub repairs: Vec<String>,
    pub latency_ms: u64,
    pub transport_retries: u32,
    pub parse_retried: bool,
    pub transport_error: Option<String>,
    pub cache_hit: bool,
}

impl PredictionRecord {
    pub fn ordinal_for(&self, domain: RatingDomain) -> Option<u8> {
        self.ordinals[domain_index(domain)]
    }
}

pub(crate) fn domain_index(domain: RatingDomain) -> usize {
    RatingDomain::ALL
        .iter()
        .position(|&d| d == domain)
        .expect("domain in ALL")
}

/// Calls the backend through the cache: a hit returns the stored response
/// byte-identically with no backend call; a miss calls and persists.
pub fn cached_complete(
    backend: &dyn Backend,
    prompt_text: &str,
    bundle: &PromptBundle,
    cache: Option<&Mutex<ResponseCache>>,
) -> Result<(BackendResponse, bool), GatewayError> {
    let key = cache_key(bundle.strategy, &backend.descriptor(), prompt_text);
    if let Some(cache) = cache {
        let hit = cache.lock().expect("cache lock").get(&key);
        if let Some(text) = hit {
            return Ok((BackendResponse { text, latency_ms: 0, transport_retries: 0 }, true));
        }
    }
    let response = backend.complete(prompt_text, bundle)?;
    if let Some(cache) = cache {
        cache
            .lock()
            .expect("cache lock")
            .put(&key, &response.text)
            .map_err(|(path, source)| GatewayError::CacheIo { path, source })?;
    }
    Ok((response, false))
}

fn dispatch_one(
    backend: &dyn Backend,
    bundle: &PromptBundle,
    cache: Option<&Mutex<ResponseCache>>,
) -> PredictionRecord {
    let base = |raw: String, parsed: ParsedOutput| PredictionRecord {
        response_id: bundle.response_id.clone(),
        participant_id: bundle.participant_id.clone(),
        message_id: bundle.target_message_id.clone(),
        strategy: bundle.strategy,
        backend: backend.descriptor(),
        ordinals: parsed.ordinals,
        continuous: parsed.continuous,
        confidences: parsed.confidences,
        raw_response: raw,
        parse_status: parsed.status,
        repairs: parsed.repairs,
        latency_ms: 0,
        transport_retries: 0,
        parse_retried: false,
        transport_error: None,
        cache_hit: false,
    };

    let first = cached_complete(backend, &bundle.rendered_text, bundle, cache);
    let (response, hit) = match first {
        Ok(v) => v,
        Err(err) => {
            let mut record = base(String::new(), ParsedOutput::failed());
            record.transport_error = Some(err.to_string());
            return record;
        }
    };
    let parsed =
        parse_prediction(&response.text, bundle.strategy, bundle.prob_mode, &bundle.response_id);

    if parsed.status != ParseStatus::Failed {
        let mut record = base(response.text.clone(), parsed);
        record.latency_ms = response.latency_ms;
        record.transport_retries = response.transport_retries;
        record.cache_hit = hit;
        return record;
    }

    // One retry with an explicit format reminder; still-failed responses
    // score as wrong and surface in the parse-failure rate.
    let reminder_text = format!("{}\n\n{JSON_REMINDER}", bundle.rendered_text);
    match cached_complete(backend, &reminder_text, bundle, cache) {
        Ok((retry_response, retry_hit)) => {
            let retry_parsed = parse_prediction(
                &retry_response.text,
                bundle.strategy,
                bundle.prob_mode,
                &bundle.response_id,
            );
            let mut record = base(retry_response.text.clone(), retry_parsed);
            record.latency_ms = response.latency_ms + retry_response.latency_ms;
            record.transport_retries = response.transport_retries + retry_response.transport_retries;
            record.parse_retried = true;
            record.cache_hit = hit && retry_hit;
            record
        }
        Err(err) => {
            let mut record = base(response.text.clone(), parsed);
            record.latency_ms = response.latency_ms;
            record.transport_retries = response.transport_retries;
            record.parse_retried = true;
            record.transport_error = Some(format!("parse-retry transport failure: {err}"));
            record.cache_hit = hit;
            record
        }
    }
}

/// Dispatches every bundle with at most `max_inflight` requests outstanding.
/// Output order equals input order regardless of completion order, and one
/// failing bundle never aborts the batch.
pub fn run_batch(
    backend: &dyn Backend,
    bundles: &[PromptBundle],
    max_inflight: usize,
    cache: Option<&Mutex<ResponseCache>>,
) -> Vec<PredictionRecord> {
    assert!(max_inflight >= 1, "max_inflight must be >= 1");
    if bundles.is_empty() {
        return Vec::new();
    }
    let workers = max_inflight.min(bundles.len());
    if workers == 1 {
        return bundles
            .iter()
            .map(|b| dispatch_one(backend, b, cache))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<PredictionRecord>>> =
        bundles.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= bundles.len() {
                    break;
                }
                let record = dispatch_one(backend, &bundles[idx], cache);
                *slots[idx].lock().expect("slot lock") = Some(record);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

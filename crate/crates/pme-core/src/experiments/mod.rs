//! Orchestrates the full study matrix - methods x backends x domains - plus
//! the history-size sweep, top-K selection evaluation and artifact export.

mod config;
mod export;
mod topk;

pub use config::{
    BackendEntry, BaselineSection, BootstrapSection, DatasetSection, FewshotSection,
    OutputSection, PromptSection, RunConfig, RunSection, SplitSection, SweepSection, TopkSection,
};
pub use export::{export_reports, export_sweep, export_topk, format_ci_cell, import_predictions, ExportPaths};
pub use topk::{topk_eval, TopKConfig, TopKReport, TopKRow};

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    rf_priors_for, BaselineError, BaselineSuite, ForestParams, LogRegParams, RfPriors,
};
use crate::cohort::{
    assert_no_leakage, Cohort, CohortError, LeakageError, SplitManifest,
};
use crate::gateway::{
    run_batch, Backend, GatewayError, ParseStatus, PredictionRecord, ResponseCache,
};
use crate::metrics::{
    score_distribution, BootstrapConfig, MetricError, MetricReport, PairSet, ScoreDistribution,
};
use crate::model::{FeatureId, RatingDomain};
use crate::prompting::{
    build_prompt, demo_pool_for, sample_demonstrations, DemonstrationSet, PromptBundle,
    PromptContext, PromptError, RenderOptions, Strategy,
};
use crate::seeding::scoped_rng;

pub const BASELINE_BACKEND: &str = "local";
pub const METHOD_LOGREG: &str = "logistic_regression";
pub const METHOD_FOREST: &str = "random_forest";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("leakage check failed; run aborted: {0}")]
    Leakage(#[from] LeakageError),
    #[error("transport failures exceeded threshold: {failed} of {total} calls ({rate:.1}% > {threshold:.1}%) on {method} x {backend}")]
    TransportExhaustion {
        method: String,
        backend: String,
        failed: usize,
        total: usize,
        rate: f64,
        threshold: f64,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One scored prediction row - an LLM record or a baseline prediction -
/// normalized for metrics and export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub response_id: String,
    pub participant_id: String,
    pub message_id: String,
    pub method: String,
    pub backend: String,
    pub ordinals: [Option<u8>; 4],
    pub continuous: [Option<f64>; 4],
    pub confidences: [Option<f64>; 4],
    pub parse_status: ParseStatus,
    pub repairs: Vec<String>,
    pub latency_ms: u64,
    pub transport_retries: u32,
    pub parse_retried: bool,
    pub cache_hit: bool,
    pub transport_error: Option<String>,
    pub raw_response: String,
    /// Whether the target message is in the participant's held-out set
    /// (metrics only ever use held-out rows).
    pub heldout: bool,
}

impl PredictionRow {
    fn from_record(record: PredictionRecord, method: String, heldout: bool) -> Self {
        PredictionRow {
            response_id: record.response_id,
            participant_id: record.participant_id,
            message_id: record.message_id,
            method,
            backend: record.backend,
            ordinals: record.ordinals,
            continuous: record.continuous,
            confidences: record.confidences,
            parse_status: record.parse_status,
            repairs: record.repairs,
            latency_ms: record.latency_ms,
            transport_retries: record.transport_retries,
            parse_retried: record.parse_retried,
            cache_hit: record.cache_hit,
            transport_error: record.transport_error,
            raw_response: record.raw_response,
            heldout,
        }
    }

    pub fn ordinal_for(&self, domain: RatingDomain) -> Option<u8> {
        self.ordinals[RatingDomain::ALL.iter().position(|&d| d == domain).expect("known domain")]
    }
}

/// A metric report labeled with its (method, backend) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub method: String,
    pub backend: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub domain: RatingDomain,
    /// "truth" or "method@backend".
    pub source: String,
    pub distribution: ScoreDistribution,
}

/// Everything a matrix run produces, in deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub rows: Vec<PredictionRow>,
    pub reports: Vec<LabeledReport>,
    pub distributions: Vec<DistributionRow>,
    pub fewshot_warnings: Vec<String>,
    pub baseline_dump: Option<String>,
}

impl RunOutput {
    pub fn rows_for(&self, method: &str, backend: &str) -> Vec<&PredictionRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.backend == backend)
            .collect()
    }

    pub fn report_for(
        &self,
        method: &str,
        backend: &str,
        domain: RatingDomain,
    ) -> Option<&MetricReport> {
        self.reports
            .iter()
            .find(|r| r.method == method && r.backend == backend && r.report.domain == domain)
            .map(|r| &r.report)
    }
}

/// Baseline fitting knobs resolved from config.
#[derive(Debug, Clone)]
pub struct BaselineOptions {
    pub features: Vec<FeatureId>,
    pub logreg: LogRegParams,
    pub forest: ForestParams,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            features: crate::baselines::default_baseline_features(),
            logreg: LogRegParams::default(),
            forest: ForestParams::default(),
        }
    }
}

/// Everything `run_matrix` needs beyond data and backends.
#[derive(Debug, Clone)]
pub struct MatrixOptions {
    pub strategies: Vec<Strategy>,
    pub render: RenderOptions,
    pub fewshot_count: usize,
    pub fewshot_seed: u64,
    pub max_inflight: usize,
    pub bootstrap: BootstrapConfig,
    pub baselines: Option<BaselineOptions>,
    /// Also predict each participant's history messages (off by default;
    /// metrics stay held-out-only either way).
    pub predict_all_messages: bool,
    /// Abort threshold on per-cell transport failure rate.
    pub max_transport_failure_rate: f64,
    /// When set, every rendered prompt is written here as
    /// `<response_id>.txt` for audits.
    pub audit_dir: Option<std::path::PathBuf>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            strategies: Strategy::ALL.to_vec(),
            render: RenderOptions::default(),
            fewshot_count: 2,
            fewshot_seed: 13,
            max_inflight: 4,
            bootstrap: BootstrapConfig::default(),
            baselines: Some(BaselineOptions::default()),
            predict_all_messages: false,
            max_transport_failure_rate: 0.25,
            audit_dir: None,
        }
    }
}

/// The evaluation targets, identical across every method and backend of a
/// run: each participant's held-out messages (plus history messages when
/// `predict_all_messages` is set), in manifest order.
fn evaluation_pairs(manifest: &SplitManifest, all_messages: bool) -> Vec<(String, String, bool)> {
    let mut out = Vec::new();
    for (pid, entry) in &manifest.participants {
        for mid in &entry.heldout_message_ids {
            out.push((pid.clone(), mid.clone(), true));
        }
        if all_messages {
            for mid in &entry.history_message_ids {
                out.push((pid.clone(), mid.clone(), false));
            }
        }
    }
    out
}

struct PreparedContext {
    demos: BTreeMap<String, Vec<DemonstrationSet>>,
    priors: BTreeMap<String, RfPriors>,
    warnings: Vec<String>,
}

/// Demonstrations and RF priors per participant, shared across strategies.
fn prepare_context(
    cohort: &Cohort,
    manifest: &SplitManifest,
    options: &MatrixOptions,
    suite: Option<&BaselineSuite>,
    need_demos: bool,
    need_priors: bool,
) -> Result<PreparedContext, RunError> {
    let mut demos = BTreeMap::new();
    let mut priors = BTreeMap::new();
    let mut warnings = Vec::new();
    for pid in manifest.participants.keys() {
        if need_demos {
            let mut pool = demo_pool_for(cohort, manifest, pid);
            if options.predict_all_messages {
                // In all-messages mode every rated message of this
                // participant is a potential target; drop them all from the
                // demonstration pool.
                let rated: Vec<String> = cohort
                    .ratings_of(pid)
                    .iter()
                    .map(|r| r.message_id.clone())
                    .collect();
                pool.retain(|r| !rated.contains(&r.message_id));
            }
            let mut sets = Vec::new();
            for domain in RatingDomain::EVALUABLE {
                let mut rng =
                    scoped_rng(options.fewshot_seed, &["demos", pid, domain.name()]);
                let set = sample_demonstrations(&pool, domain, &mut rng, options.fewshot_count)?;
                for w in &set.warnings {
                    warnings.push(format!("{pid}: {w}"));
                }
                sets.push(set);
            }
            demos.insert(pid.clone(), sets);
        }
        if need_priors {
            let suite = suite.ok_or_else(|| {
                RunError::Config(
                    "digital_twin_hybrid requires baselines (RF priors) to be enabled".to_string(),
                )
            })?;
            let profile = cohort
                .participant(pid)
                .ok_or_else(|| PromptError::UnknownParticipant(pid.clone()))?;
            priors.insert(pid.clone(), rf_priors_for(suite, profile)?);
        }
    }
    Ok(PreparedContext { demos, priors, warnings })
}

fn build_bundles(
    cohort: &Cohort,
    manifest: &SplitManifest,
    strategy: Strategy,
    pairs: &[(String, String, bool)],
    prepared: &PreparedContext,
    options: &MatrixOptions,
) -> Result<Vec<PromptBundle>, RunError> {
    let mut bundles = Vec::with_capacity(pairs.len());
    for (pid, mid, _heldout) in pairs {
        let ctx = PromptContext {
            cohort,
            manifest,
            demonstrations: prepared.demos.get(pid).map(Vec::as_slice),
            rf_priors: prepared.priors.get(pid),
            options: &options.render,
        };
        let bundle = build_prompt(strategy, pid, mid, &ctx)?;
        // Correctness over progress: a leaked prompt aborts the whole run.
        assert_no_leakage(cohort, manifest, &bundle.rendered_text, pid, mid)?;
        if let Some(audit_dir) = &options.audit_dir {
            std::fs::create_dir_all(audit_dir).map_err(|e| RunError::Io {
                path: audit_dir.display().to_string(),
                source: e,
            })?;
            let path = audit_dir.join(format!("{}.txt", bundle.response_id));
            std::fs::write(&path, &bundle.rendered_text).map_err(|e| RunError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        bundles.push(bundle);
    }
    Ok(bundles)
}

fn pairs_for_domain(
    cohort: &Cohort,
    rows: &[&PredictionRow],
    domain: RatingDomain,
) -> Result<PairSet, RunError> {
    let pairs = rows
        .iter()
        .filter(|r| r.heldout)
        .map(|r| {
            let truth = cohort
                .rating_of(&r.participant_id, &r.message_id)
                .map(|t| t.ordinal_for(domain))
                .ok_or_else(|| RunError::Config(format!(
                    "no ground-truth rating for ({}, {})",
                    r.participant_id, r.message_id
                )))?;
            Ok((truth, r.ordinal_for(domain)))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    PairSet::new(domain, pairs).map_err(RunError::Metric)
}

fn score_cell(
    cohort: &Cohort,
    method: &str,
    backend: &str,
    rows: &[&PredictionRow],
    bootstrap: BootstrapConfig,
    reports: &mut Vec<LabeledReport>,
    distributions: &mut Vec<DistributionRow>,
) -> Result<(), RunError> {
    for domain in RatingDomain::EVALUABLE {
        let pairs = pairs_for_domain(cohort, rows, domain)?;
        let report = MetricReport::compute(&pairs, bootstrap)?;
        reports.push(LabeledReport {
            method: method.to_string(),
            backend: backend.to_string(),
            report,
        });
        distributions.push(DistributionRow {
            domain,
            source: format!("{method}@{backend}"),
            distribution: score_distribution(
                rows.iter().filter(|r| r.heldout).map(|r| r.ordinal_for(domain)),
            ),
        });
    }
    Ok(())
}

/// Scores every (method, backend) cell found in `rows` - in first-appearance
/// order - and prepends one truth histogram per domain. Both `run_matrix`
/// and artifact-driven re-reporting go through here.
pub fn score_all(
    cohort: &Cohort,
    rows: &[PredictionRow],
    bootstrap: BootstrapConfig,
) -> Result<(Vec<LabeledReport>, Vec<DistributionRow>), RunError> {
    let mut reports = Vec::new();
    let mut distributions = Vec::new();

    let mut cells: Vec<(String, String)> = Vec::new();
    for row in rows {
        let key = (row.method.clone(), row.backend.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }

    if let Some((method, backend)) = cells.first() {
        let first_cell: Vec<&PredictionRow> = rows
            .iter()
            .filter(|r| &r.method == method && &r.backend == backend && r.heldout)
            .collect();
        for domain in RatingDomain::EVALUABLE {
            let truths = first_cell.iter().map(|r| {
                cohort
                    .rating_of(&r.participant_id, &r.message_id)
                    .map(|t| t.ordinal_for(domain))
            });
            distributions.push(DistributionRow {
                domain,
                source: "truth".to_string(),
                distribution: score_distribution(truths),
            });
        }
    }

    for (method, backend) in &cells {
        let cell_rows: Vec<&PredictionRow> = rows
            .iter()
            .filter(|r| &r.method == method && &r.backend == backend)
            .collect();
        score_cell(
            cohort,
            method,
            backend,
            &cell_rows,
            bootstrap,
            &mut reports,
            &mut distributions,
        )?;
    }
    Ok((reports, distributions))
}

fn baseline_rows(
    cohort: &Cohort,
    suite: &BaselineSuite,
    pairs: &[(String, String, bool)],
) -> Result<Vec<PredictionRow>, RunError> {
    let mut rows = Vec::new();
    for method in [METHOD_LOGREG, METHOD_FOREST] {
        // Participant-level features only: one prediction per participant,
        // repeated across that participant's messages by construction.
        let mut per_participant: BTreeMap<String, [Option<u8>; 4]> = BTreeMap::new();
        for (pid, _, _) in pairs {
            if per_participant.contains_key(pid) {
                continue;
            }
            let profile = cohort
                .participant(pid)
                .ok_or_else(|| PromptError::UnknownParticipant(pid.clone()))?;
            let mut ordinals = [None; 4];
            for (i, domain) in RatingDomain::ALL.iter().enumerate() {
                let prediction = match method {
                    METHOD_LOGREG => {
                        if domain.is_evaluable() {
                            Some(suite.predict_logreg(*domain, profile)?.0)
                        } else {
                            None
                        }
                    }
                    _ => Some(suite.predict_forest(*domain, profile)?.0),
                };
                ordinals[i] = prediction.map(|l| l.ordinal());
            }
            per_participant.insert(pid.clone(), ordinals);
        }
        for (pid, mid, heldout) in pairs {
            let ordinals = per_participant[pid];
            rows.push(PredictionRow {
                response_id: format!("{method}--{pid}--{mid}"),
                participant_id: pid.clone(),
                message_id: mid.clone(),
                method: method.to_string(),
                backend: BASELINE_BACKEND.to_string(),
                ordinals,
                continuous: [None; 4],
                confidences: [None; 4],
                parse_status: ParseStatus::Ok,
                repairs: Vec::new(),
                latency_ms: 0,
                transport_retries: 0,
                parse_retried: false,
                cache_hit: false,
                transport_error: None,
                raw_response: String::new(),
                heldout: *heldout,
            });
        }
    }
    Ok(rows)
}

/// Runs every (strategy, backend) cell plus the supervised baselines on the
/// shared evaluation pairs, scores per domain, and collects distributions.
pub fn run_matrix(
    cohort: &Cohort,
    manifest: &SplitManifest,
    backends: &[Box<dyn Backend>],
    options: &MatrixOptions,
    cache: Option<&Mutex<ResponseCache>>,
) -> Result<RunOutput, RunError> {
    let pairs = evaluation_pairs(manifest, options.predict_all_messages);
    let suite = match &options.baselines {
        Some(opts) => Some(BaselineSuite::fit(
            cohort,
            manifest,
            &opts.features,
            opts.logreg,
            opts.forest,
        )?),
        None => None,
    };

    let need_demos = options.strategies.iter().any(|s| s.needs_demonstrations());
    let need_priors = options.strategies.iter().any(|s| s.needs_rf_priors());
    let prepared =
        prepare_context(cohort, manifest, options, suite.as_ref(), need_demos, need_priors)?;

    let mut rows: Vec<PredictionRow> = Vec::new();

    for &strategy in &options.strategies {
        let bundles = build_bundles(cohort, manifest, strategy, &pairs, &prepared, options)?;
        for backend in backends {
            let records =
                run_batch(backend.as_ref(), &bundles, options.max_inflight, cache);
            let backend_name = backend.descriptor();
            let failed = records.iter().filter(|r| r.transport_error.is_some()).count();
            let rate = failed as f64 / records.len().max(1) as f64;
            if rate > options.max_transport_failure_rate {
                return Err(RunError::TransportExhaustion {
                    method: strategy.slug().to_string(),
                    backend: backend_name,
                    failed,
                    total: records.len(),
                    rate: rate * 100.0,
                    threshold: options.max_transport_failure_rate * 100.0,
                });
            }
            let cell_rows: Vec<PredictionRow> = records
                .into_iter()
                .zip(&pairs)
                .map(|(record, (_, _, heldout))| {
                    PredictionRow::from_record(record, strategy.slug().to_string(), *heldout)
                })
                .collect();
            rows.extend(cell_rows);
        }
    }

    let baseline_dump = if let Some(suite) = &suite {
        rows.extend(baseline_rows(cohort, suite, &pairs)?);
        Some(suite.dump())
    } else {
        None
    };

    let (reports, distributions) = score_all(cohort, &rows, options.bootstrap)?;

    Ok(RunOutput {
        rows,
        reports,
        distributions,
        fewshot_warnings: prepared.warnings,
        baseline_dump,
    })
}

/// One sweep cell: a history size crossed with a scored report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub history_size: usize,
    pub method: String,
    pub backend: String,
    pub domain: RatingDomain,
    pub accuracy: f64,
    pub cohen_kappa: Option<f64>,
    pub n: usize,
}

/// Derives, for each size, a manifest whose history is a seeded subset of
/// the base history while the held-out set stays fixed, so accuracy
/// differences are attributable to history alone.
pub fn sweep_manifest(
    base: &SplitManifest,
    size: usize,
) -> Result<SplitManifest, RunError> {
    if size < 1 || size > base.history_size {
        return Err(RunError::Config(format!(
            "sweep size {size} outside 1..={}",
            base.history_size
        )));
    }
    let mut manifest = base.clone();
    manifest.history_size = size;
    for (pid, entry) in &mut manifest.participants {
        let mut rng = scoped_rng(base.seed, &["sweep", &size.to_string(), pid]);
        let mut pool = entry.history_message_ids.clone();
        pool.sort_unstable();
        for i in 0..size.min(pool.len()) {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(size);
        pool.sort_unstable();
        entry.history_message_ids = pool;
    }
    Ok(manifest)
}

/// Runs the digital-twin strategies at each history size (held-out triple
/// fixed at the base manifest's) and tabulates accuracy per size.
pub fn history_sweep(
    cohort: &Cohort,
    base_manifest: &SplitManifest,
    sizes: &[usize],
    strategies: &[Strategy],
    backends: &[Box<dyn Backend>],
    options: &MatrixOptions,
    cache: Option<&Mutex<ResponseCache>>,
) -> Result<Vec<SweepRow>, RunError> {
    let mut rows = Vec::new();
    for &size in sizes {
        let manifest = sweep_manifest(base_manifest, size)?;
        let sweep_options = MatrixOptions {
            strategies: strategies.to_vec(),
            baselines: None,
            ..options.clone()
        };
        let output = run_matrix(cohort, &manifest, backends, &sweep_options, cache)?;
        for labeled in &output.reports {
            rows.push(SweepRow {
                history_size: size,
                method: labeled.method.clone(),
                backend: labeled.backend.clone(),
                domain: labeled.report.domain,
                accuracy: labeled.report.accuracy.value,
                cohen_kappa: labeled.report.cohen_kappa.map(|m| m.value),
                n: labeled.report.n,
            });
        }
    }
    Ok(rows)
}

//! Subcommand implementations.

use std::path::Path;
use std::sync::Mutex;

use pme_core::cohort::{
    gen_synthetic_cohort, load_cohort, make_split, save_cohort, validate, Cohort, CohortError,
    SplitManifest,
};
use pme_core::experiments::{
    export_reports, export_sweep, export_topk, history_sweep, import_predictions, run_matrix,
    score_all, topk_eval, PredictionRow, RunConfig, RunError, RunOutput, TopKReport,
};
use pme_core::gateway::{Backend, BackendResponse, GatewayError, ResponseCache};
use pme_core::prompting::PromptBundle;
use pme_core::RatingDomain;

use crate::{load_config, Cli, CliError, Command, Printer};

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let printer = Printer { quiet: cli.quiet, verbose: cli.verbose };
    if let Command::Gen { participants, messages, ratings_per_participant, seed, out } =
        &cli.command
    {
        return cmd_gen(*participants, *messages, *ratings_per_participant, *seed, out, printer);
    }

    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".to_string()))?;
    let config = load_config(config_path, &cli.overrides)?;

    match cli.command {
        Command::Validate => cmd_validate(&config, printer),
        Command::Split => cmd_split(&config, printer).map(|_| ()),
        Command::Run => cmd_run(&config, printer),
        Command::Sweep => cmd_sweep(&config, printer),
        Command::Topk => cmd_topk(&config, printer),
        Command::Report => cmd_report(&config, printer),
        Command::Gen { .. } => unreachable!("handled above"),
    }
}

fn map_run_error(e: RunError) -> CliError {
    match e {
        RunError::Cohort(CohortError::Io { .. }) => CliError::Usage(e.to_string()),
        RunError::Cohort(CohortError::SplitConfig(_)) => CliError::Usage(e.to_string()),
        RunError::Cohort(CohortError::Invalid { .. }) => CliError::Domain(e.to_string()),
        RunError::Gateway(GatewayError::MissingApiKey(_) | GatewayError::Fixture { .. }) => {
            CliError::Usage(e.to_string())
        }
        RunError::Config(_) | RunError::Io { .. } | RunError::Prompt(_) => {
            CliError::Usage(e.to_string())
        }
        RunError::Leakage(_)
        | RunError::TransportExhaustion { .. }
        | RunError::Gateway(_)
        | RunError::Baseline(_)
        | RunError::Metric(_) => CliError::Domain(e.to_string()),
    }
}

fn map_cohort_error(e: CohortError) -> CliError {
    map_run_error(RunError::Cohort(e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(config: &RunConfig, printer: Printer) -> Result<Cohort, CliError> {
    let (cohort, warnings) = load_cohort(
        &config.dataset.participants,
        &config.dataset.messages,
        &config.dataset.ratings,
    )
    .map_err(map_cohort_error)?;
    for warning in warnings {
        printer.info(format!("warning: {warning}"));
    }
    Ok(cohort)
}

fn cmd_gen(
    participants: usize,
    messages: usize,
    ratings_per_participant: usize,
    seed: u64,
    out: &Path,
    printer: Printer,
) -> Result<(), CliError> {
    if ratings_per_participant > messages {
        return Err(CliError::Usage(format!(
            "ratings-per-participant ({ratings_per_participant}) cannot exceed messages ({messages})"
        )));
    }
    ensure_dir(out)?;
    let (cohort, _) = gen_synthetic_cohort(participants, messages, ratings_per_participant, seed);
    save_cohort(
        &cohort,
        &out.join("participants.csv"),
        &out.join("messages.csv"),
        &out.join("ratings.csv"),
    )
    .map_err(map_cohort_error)?;
    printer.info(format!(
        "wrote synthetic cohort to {}: {} participants, {} messages, {} ratings (seed {seed})",
        out.display(),
        cohort.participants.len(),
        cohort.messages.len(),
        cohort.ratings.len(),
    ));
    Ok(())
}

fn cmd_validate(config: &RunConfig, printer: Printer) -> Result<(), CliError> {
    let cohort = load_dataset(config, printer)?;
    let report = validate(&cohort);
    ensure_dir(&config.output.dir)?;
    let path = config.output.dir.join("validation.json");
    write_text(&path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    printer.info(format!(
        "participants: {}  messages: {}  ratings: {}  mean ratings/message: {:.2}",
        report.participant_count,
        report.message_count,
        report.rating_count,
        report.mean_ratings_per_message,
    ));
    printer.info(format!("report written to {}", path.display()));
    if report.is_clean() {
        printer.info("validation: clean");
        Ok(())
    } else {
        for issue in report.issues.iter().take(20) {
            printer.info(format!("issue: {issue}"));
        }
        if report.issues.len() > 20 {
            printer.info(format!("... and {} more", report.issues.len() - 20));
        }
        Err(CliError::Domain(format!(
            "validation found {} issue(s); full report at {}",
            report.issues.len(),
            path.display()
        )))
    }
}

/// Loads the persisted manifest when one exists in the output directory,
/// otherwise builds and persists a fresh one.
fn resolve_manifest(
    config: &RunConfig,
    cohort: &Cohort,
    printer: Printer,
) -> Result<SplitManifest, CliError> {
    let path = config.output.dir.join("split_manifest.json");
    if path.exists() {
        printer.detail(format!("loading existing split manifest {}", path.display()));
        return SplitManifest::load(&path).map_err(map_cohort_error);
    }
    let manifest = make_split(
        cohort,
        config.split.seed,
        config.split.history_size,
        config.split.stratified,
    )
    .map_err(map_cohort_error)?;
    ensure_dir(&config.output.dir)?;
    manifest.save(&path).map_err(map_cohort_error)?;
    printer.detail(format!("split manifest written to {}", path.display()));
    Ok(manifest)
}

fn cmd_split(config: &RunConfig, printer: Printer) -> Result<SplitManifest, CliError> {
    let cohort = load_dataset(config, printer)?;
    ensure_dir(&config.output.dir)?;
    let manifest = resolve_manifest(config, &cohort, printer)?;
    printer.info(format!(
        "split: seed {} history_size {} participants {}",
        manifest.seed,
        manifest.history_size,
        manifest.participants.len()
    ));
    Ok(manifest)
}

/// Renames a backend for reports without changing its behavior.
struct NamedBackend {
    inner: Box<dyn Backend>,
    name: String,
}

impl Backend for NamedBackend {
    fn descriptor(&self) -> String {
        self.name.clone()
    }

    fn complete(
        &self,
        prompt_text: &str,
        bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        self.inner.complete(prompt_text, bundle)
    }
}

fn build_backends(config: &RunConfig, cohort: &Cohort) -> Result<Vec<Box<dyn Backend>>, CliError> {
    if config.backends.is_empty() {
        return Err(CliError::Usage(
            "no backends configured; add at least one [[backends]] entry".to_string(),
        ));
    }
    config
        .backends
        .iter()
        .map(|entry| {
            let backend = entry
                .spec
                .build(cohort)
                .map_err(|e| map_run_error(RunError::Gateway(e)))?;
            Ok(match &entry.name {
                Some(name) => Box::new(NamedBackend { inner: backend, name: name.clone() })
                    as Box<dyn Backend>,
                None => backend,
            })
        })
        .collect()
}

fn open_cache(config: &RunConfig) -> Result<Option<Mutex<ResponseCache>>, CliError> {
    if !config.run.cache {
        return Ok(None);
    }
    let dir = config.output.dir.join("raw");
    ensure_dir(&dir)?;
    let cache = ResponseCache::open(&dir.join("cache.tsv"))
        .map_err(|e| CliError::Usage(format!("cannot open cache: {e}")))?;
    Ok(Some(Mutex::new(cache)))
}

fn topk_reports_for(
    config: &RunConfig,
    cohort: &Cohort,
    rows: &[PredictionRow],
    printer: Printer,
) -> Result<Vec<TopKReport>, CliError> {
    let method = &config.topk.method;
    let backend = match &config.topk.backend {
        Some(b) => Some(b.clone()),
        None => rows.iter().find(|r| &r.method == method).map(|r| r.backend.clone()),
    };
    let Some(backend) = backend else {
        printer.info(format!(
            "top-K skipped: no predictions for method {method:?} in this run"
        ));
        return Ok(Vec::new());
    };
    let cell: Vec<&PredictionRow> = rows
        .iter()
        .filter(|r| &r.method == method && r.backend == backend)
        .collect();
    if cell.is_empty() {
        printer.info(format!("top-K skipped: no predictions for {method}@{backend}"));
        return Ok(Vec::new());
    }
    let topk_config = config.topk_config();
    RatingDomain::EVALUABLE
        .iter()
        .map(|&domain| topk_eval(&cell, cohort, domain, &topk_config).map_err(map_run_error))
        .collect()
}

fn write_run_manifest(
    config: &RunConfig,
    output: &RunOutput,
    cache: Option<&Mutex<ResponseCache>>,
) -> Result<(), CliError> {
    let cache_hash = cache.map(|c| c.lock().expect("cache lock").content_hash());
    let manifest = serde_json::json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "split": { "seed": config.split.seed, "history_size": config.split.history_size,
                   "stratified": config.split.stratified },
        "bootstrap": { "n": config.bootstrap.n, "seed": config.bootstrap.seed },
        "fewshot": { "count": config.fewshot.count, "seed": config.fewshot.seed },
        "prob_mode": config.prompt.prob_mode,
        "prediction_rows": output.rows.len(),
        "reports": output.reports.len(),
        "cache_content_hash": cache_hash,
    });
    write_text(
        &config.output.dir.join("run_manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

fn cmd_run(config: &RunConfig, printer: Printer) -> Result<(), CliError> {
    ensure_dir(&config.output.dir)?;
    let cohort = load_dataset(config, printer)?;

    let report = validate(&cohort);
    write_text(
        &config.output.dir.join("validation.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    if !report.is_clean() {
        printer.info(format!(
            "validation found {} issue(s); continuing (advisory)",
            report.issues.len()
        ));
    }

    let manifest = resolve_manifest(config, &cohort, printer)?;
    // Backends are built (and API-key env vars checked) before any request.
    let backends = build_backends(config, &cohort)?;
    let cache = open_cache(config)?;
    let options = config.matrix_options().map_err(map_run_error)?;

    let output = run_matrix(&cohort, &manifest, &backends, &options, cache.as_ref())
        .map_err(map_run_error)?;
    for warning in &output.fewshot_warnings {
        printer.detail(format!("fewshot: {warning}"));
    }

    let topk = topk_reports_for(config, &cohort, &output.rows, printer)?;
    let paths = export_reports(&config.output.dir, &output, &topk).map_err(map_run_error)?;
    if let Some(dump) = &output.baseline_dump {
        write_text(&config.output.dir.join("baselines.json"), dump)?;
    }
    write_text(&config.output.dir.join("config.toml"), &config.to_toml())?;
    write_run_manifest(config, &output, cache.as_ref())?;

    printer.info(format!(
        "run complete: {} prediction rows, {} metric reports",
        output.rows.len(),
        output.reports.len()
    ));
    printer.info(format!("metrics table: {}", paths.metrics_combined.display()));
    Ok(())
}

fn cmd_sweep(config: &RunConfig, printer: Printer) -> Result<(), CliError> {
    ensure_dir(&config.output.dir)?;
    let cohort = load_dataset(config, printer)?;
    let manifest = resolve_manifest(config, &cohort, printer)?;
    let backends = build_backends(config, &cohort)?;
    let cache = open_cache(config)?;
    let mut options = config.matrix_options().map_err(map_run_error)?;
    // Per-size prompt audits would collide; the sweep writes tables only.
    options.audit_dir = None;

    let rows = history_sweep(
        &cohort,
        &manifest,
        &config.sweep.sizes,
        &config.sweep.strategies,
        &backends,
        &options,
        cache.as_ref(),
    )
    .map_err(map_run_error)?;
    let path = export_sweep(&config.output.dir, &rows).map_err(map_run_error)?;
    printer.info(format!("sweep table ({} rows): {}", rows.len(), path.display()));
    Ok(())
}

fn load_predictions(config: &RunConfig) -> Result<Vec<PredictionRow>, CliError> {
    let path = config.output.dir.join("predictions.tsv");
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "missing prerequisite artifact {}; run `pme run` first",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    import_predictions(&text).map_err(map_run_error)
}

fn cmd_topk(config: &RunConfig, printer: Printer) -> Result<(), CliError> {
    let cohort = load_dataset(config, printer)?;
    let rows = load_predictions(config)?;
    let reports = topk_reports_for(config, &cohort, &rows, printer)?;
    if reports.is_empty() {
        return Err(CliError::Usage(format!(
            "no stored predictions for top-K method {:?}",
            config.topk.method
        )));
    }
    let paths = export_topk(&config.output.dir, &reports).map_err(map_run_error)?;
    for path in paths {
        printer.info(format!("top-K table: {}", path.display()));
    }
    Ok(())
}

fn cmd_report(config: &RunConfig, printer: Printer) -> Result<(), CliError> {
    let cohort = load_dataset(config, printer)?;
    let rows = load_predictions(config)?;
    let bootstrap = config.matrix_options().map_err(map_run_error)?.bootstrap;
    let (reports, distributions) = score_all(&cohort, &rows, bootstrap).map_err(map_run_error)?;
    let output = RunOutput {
        rows,
        reports,
        distributions,
        fewshot_warnings: Vec::new(),
        baseline_dump: None,
    };
    let paths = export_reports(&config.output.dir, &output, &[]).map_err(map_run_error)?;
    printer.info(format!("metrics table: {}", paths.metrics_combined.display()));
    Ok(())
}

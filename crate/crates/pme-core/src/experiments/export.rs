//! Writes run artifacts as delimited text: metric tables in the results
//! row format ("0.416 [0.363, 0.469]"), per-domain score-frequency files,
//! the predictions table and top-K curves. All output is deterministic.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{DistributionRow, RunError, RunOutput, SweepRow, TopKReport};
use crate::metrics::MetricWithCi;
use crate::model::RatingDomain;

fn write_file(path: &Path, content: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| RunError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, content).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// "0.416 [0.363, 0.469]" - the table cell format for a point estimate with
/// its 95% CI.
pub fn format_ci_cell(metric: Option<&MetricWithCi>) -> String {
    match metric {
        Some(m) => match m.ci {
            Some((lo, hi)) => format!("{:.3} [{:.3}, {:.3}]", m.value, lo, hi),
            None => format!("{:.3}", m.value),
        },
        None => "-".to_string(),
    }
}

const METRIC_HEADER: &str = "Model\tDomain\tN\tAccuracy [95% CI]\tDir. Acc. [95% CI]\tKappa [95% CI]\tMacro-F1 [95% CI]\tDir. Macro-F1 [95% CI]\tAccuracy (parsed only)\tParse-failure rate";

fn metric_line(model: &str, report: &crate::metrics::MetricReport) -> String {
    let opt3 = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    format!(
        "{model}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
        report.domain,
        report.n,
        format_ci_cell(Some(&report.accuracy)),
        format_ci_cell(Some(&report.directional_accuracy)),
        format_ci_cell(report.cohen_kappa.as_ref()),
        format_ci_cell(report.macro_f1.as_ref()),
        format_ci_cell(report.directional_macro_f1.as_ref()),
        opt3(report.accuracy_nonnull),
        report.parse_failure_rate,
    )
}

fn distribution_file(rows: &[&DistributionRow]) -> String {
    let mut out = String::from("source\tordinal\tcount\n");
    for row in rows {
        for (i, count) in row.distribution.bins.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{count}", row.source, i + 1);
        }
        let _ = writeln!(out, "{}\tnull\t{}", row.source, row.distribution.nulls);
    }
    out
}

fn escape_field(text: &str) -> String {
    serde_json::to_string(text).expect("strings serialize")
}

fn predictions_table(output: &RunOutput) -> String {
    let mut out = String::from(
        "response_id\tparticipant_id\tmessage_id\tmethod\tbackend\theldout\t\
         content\tdesign\tcoping\tquitting\t\
         cont_content\tcont_design\tcont_coping\tcont_quitting\t\
         conf_content\tconf_design\tconf_coping\tconf_quitting\t\
         parse_status\trepairs\tlatency_ms\ttransport_retries\tparse_retried\t\
         cache_hit\ttransport_error\traw_response\n",
    );
    let ord = |o: Option<u8>| o.map_or(String::new(), |v| v.to_string());
    let real = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v}"));
    for row in &output.rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.response_id,
            row.participant_id,
            row.message_id,
            row.method,
            row.backend,
            row.heldout,
            ord(row.ordinals[0]),
            ord(row.ordinals[1]),
            ord(row.ordinals[2]),
            ord(row.ordinals[3]),
            real(row.continuous[0]),
            real(row.continuous[1]),
            real(row.continuous[2]),
            real(row.continuous[3]),
            real(row.confidences[0]),
            real(row.confidences[1]),
            real(row.confidences[2]),
            real(row.confidences[3]),
            row.parse_status,
            escape_field(&row.repairs.join("; ")),
            row.latency_ms,
            row.transport_retries,
            row.parse_retried,
            row.cache_hit,
            escape_field(row.transport_error.as_deref().unwrap_or("")),
            escape_field(&row.raw_response),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub metrics_combined: PathBuf,
    pub metrics_per_method: Vec<PathBuf>,
    pub distributions: Vec<PathBuf>,
    pub predictions: PathBuf,
    pub topk: Vec<PathBuf>,
}

/// Writes metric tables (combined plus one per method), per-domain
/// distribution files, the predictions table and top-K curves under `dir`.
pub fn export_reports(
    dir: &Path,
    output: &RunOutput,
    topk: &[TopKReport],
) -> Result<ExportPaths, RunError> {
    // Combined metrics table: one row per (method, backend, domain).
    let mut combined = format!("Method\t{METRIC_HEADER}\n");
    for labeled in &output.reports {
        let _ = writeln!(
            combined,
            "{}\t{}",
            labeled.method,
            metric_line(&labeled.backend, &labeled.report)
        );
    }
    let metrics_combined = dir.join("metrics.tsv");
    write_file(&metrics_combined, &combined)?;

    // One table per method: rows are model x domain.
    let mut methods: Vec<String> =
        output.reports.iter().map(|r| r.method.clone()).collect();
    methods.sort_unstable();
    methods.dedup();
    let mut metrics_per_method = Vec::new();
    for method in &methods {
        let mut table = format!("{METRIC_HEADER}\n");
        for labeled in output.reports.iter().filter(|r| &r.method == method) {
            let _ = writeln!(table, "{}", metric_line(&labeled.backend, &labeled.report));
        }
        let path = dir.join(format!("metrics_{method}.tsv"));
        write_file(&path, &table)?;
        metrics_per_method.push(path);
    }

    // Score-frequency distributions per domain; the truth row comes first.
    let mut distributions = Vec::new();
    for domain in RatingDomain::EVALUABLE {
        let rows: Vec<&DistributionRow> = output
            .distributions
            .iter()
            .filter(|d| d.domain == domain)
            .collect();
        let path = dir.join(format!("distributions_{domain}.tsv"));
        write_file(&path, &distribution_file(&rows))?;
        distributions.push(path);
    }

    let predictions = dir.join("predictions.tsv");
    write_file(&predictions, &predictions_table(output))?;

    let topk_paths = export_topk(dir, topk)?;

    Ok(ExportPaths {
        metrics_combined,
        metrics_per_method,
        distributions,
        predictions,
        topk: topk_paths,
    })
}

/// Writes one `topk_<domain>.tsv` per report: (selector, K, mean, lo, hi)
/// rows under a provenance comment line.
pub fn export_topk(dir: &Path, topk: &[TopKReport]) -> Result<Vec<PathBuf>, RunError> {
    let mut paths = Vec::new();
    for report in topk {
        let mut out = format!(
            "# method={} backend={} scored_messages={}\nselector\tk\tmean_human_rating\tlo\thi\n",
            report.method, report.backend, report.scored_messages
        );
        for row in &report.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                row.selector, row.k, row.mean_human_rating, row.lo, row.hi
            );
        }
        let path = dir.join(format!("topk_{}.tsv", report.domain));
        write_file(&path, &out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a predictions table written by [`export_reports`], so reporting
/// and top-K evaluation can run from stored artifacts.
pub fn import_predictions(text: &str) -> Result<Vec<super::PredictionRow>, RunError> {
    use crate::gateway::ParseStatus;
    let bad = |line: usize, what: &str| {
        RunError::Config(format!("predictions table line {}: {what}", line + 1))
    };
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(RunError::Config("predictions table is empty".to_string()));
    };
    if !header.starts_with("response_id\t") {
        return Err(RunError::Config("predictions table header not recognized".to_string()));
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 26 {
            return Err(bad(line_no, "wrong column count"));
        }
        let ord = |i: usize| -> Result<Option<u8>, RunError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                fields[i].parse::<u8>().map(Some).map_err(|_| bad(line_no, "bad ordinal"))
            }
        };
        let real = |i: usize| -> Result<Option<f64>, RunError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                fields[i].parse::<f64>().map(Some).map_err(|_| bad(line_no, "bad real"))
            }
        };
        let unescape = |i: usize| -> Result<String, RunError> {
            serde_json::from_str::<String>(fields[i]).map_err(|_| bad(line_no, "bad escaped field"))
        };
        let parse_status = match fields[18] {
            "Ok" => ParseStatus::Ok,
            "Repaired" => ParseStatus::Repaired,
            "Failed" => ParseStatus::Failed,
            other => return Err(bad(line_no, &format!("unknown parse_status {other:?}"))),
        };
        let repairs_joined = unescape(19)?;
        let transport_error = unescape(24)?;
        rows.push(super::PredictionRow {
            response_id: fields[0].to_string(),
            participant_id: fields[1].to_string(),
            message_id: fields[2].to_string(),
            method: fields[3].to_string(),
            backend: fields[4].to_string(),
            heldout: fields[5] == "true",
            ordinals: [ord(6)?, ord(7)?, ord(8)?, ord(9)?],
            continuous: [real(10)?, real(11)?, real(12)?, real(13)?],
            confidences: [real(14)?, real(15)?, real(16)?, real(17)?],
            parse_status,
            repairs: if repairs_joined.is_empty() {
                Vec::new()
            } else {
                repairs_joined.split("; ").map(str::to_string).collect()
            },
            latency_ms: fields[20].parse().map_err(|_| bad(line_no, "bad latency"))?,
            transport_retries: fields[21].parse().map_err(|_| bad(line_no, "bad retries"))?,
            parse_retried: fields[22] == "true",
            cache_hit: fields[23] == "true",
            transport_error: if transport_error.is_empty() { None } else { Some(transport_error) },
            raw_response: unescape(25)?,
        });
    }
    Ok(rows)
}

/// One row per (size, method, backend, domain).
pub fn export_sweep(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf, RunError> {
    let mut out = String::from("history_size\tmethod\tbackend\tdomain\tn\taccuracy\tkappa\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
            row.history_size,
            row.method,
            row.backend,
            row.domain,
            row.n,
            row.accuracy,
            row.cohen_kappa.map_or("-".to_string(), |k| format!("{k:.6}")),
        );
    }
    let path = dir.join("sweep.tsv");
    write_file(&path, &out)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricWithCi;

    #[test]
    fn ci_cell_format_matches_results_tables() {
        let metric = MetricWithCi {
            value: 0.416,
            ci: Some((0.363, 0.469)),
            ci_excludes_point: false,
        };
        assert_eq!(format_ci_cell(Some(&metric)), "0.416 [0.363, 0.469]");
        assert_eq!(format_ci_cell(None), "-");
        let bare = MetricWithCi { value: 0.5, ci: None, ci_excludes_point: false };
        assert_eq!(format_ci_cell(Some(&bare)), "0.500");
    }

    #[test]
    fn predictions_table_round_trips() {
        use crate::cohort::{gen_synthetic_cohort, make_split};
        use crate::experiments::{run_matrix, BaselineOptions, MatrixOptions};
        use crate::gateway::{Backend, NoisyOracleBackend};
        use crate::metrics::BootstrapConfig;

        let (cohort, _) = gen_synthetic_cohort(6, 20, 10, 55);
        let manifest = make_split(&cohort, 5, 7, false).unwrap();
        let backends: Vec<Box<dyn Backend>> =
            vec![Box::new(NoisyOracleBackend::new(&cohort, 0.4, 3))];
        let options = MatrixOptions {
            strategies: vec![crate::prompting::Strategy::ZeroShotProb],
            baselines: None::<BaselineOptions>,
            bootstrap: BootstrapConfig { n_resamples: 10, seed: 1 },
            ..MatrixOptions::default()
        };
        let output = run_matrix(&cohort, &manifest, &backends, &options, None).unwrap();
        let table = predictions_table(&output);
        let parsed = import_predictions(&table).unwrap();
        assert_eq!(parsed, output.rows);
    }

    #[test]
    fn rounding_matches_three_decimals() {
        let metric = MetricWithCi {
            value: 0.48148148,
            ci: Some((0.4321, 0.5404)),
            ci_excludes_point: false,
        };
        assert_eq!(format_ci_cell(Some(&metric)), "0.481 [0.432, 0.540]");
    }
}

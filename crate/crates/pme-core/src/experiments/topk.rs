//! Top-K message selection: model-scored top-K versus the human oracle and
//! seeded random selection, compared by the mean human rating of the
//! selected set.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{PredictionRow, RunError};
use crate::cohort::Cohort;
use crate::model::RatingDomain;
use crate::seeding::scoped_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKConfig {
    pub k_values: Vec<usize>,
    pub random_draws: usize,
    pub seed: u64,
}

impl Default for TopKConfig {
    fn default() -> Self {
        TopKConfig { k_values: vec![5, 10, 15, 20, 25], random_draws: 1000, seed: 23 }
    }
}

/// One (selector, K) result. For the deterministic selectors the band
/// collapses to the mean; for random selection it is the 2.5th/97.5th
/// percentile over the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub selector: String,
    pub k: usize,
    pub mean_human_rating: f64,
    pub lo: f64,
    pub hi: f64,
    pub selected_message_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub domain: RatingDomain,
    pub method: String,
    pub backend: String,
    pub scored_messages: usize,
    pub rows: Vec<TopKRow>,
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean true ordinal per message over every rating in the cohort.
fn human_scores(cohort: &Cohort, domain: RatingDomain) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for rating in &cohort.ratings {
        let entry = sums.entry(rating.message_id.clone()).or_insert((0.0, 0));
        entry.0 += rating.ordinal_for(domain) as f64;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(mid, (sum, n))| (mid, sum / n as f64))
        .collect()
}

/// Mean predicted ordinal per message over the given rows (nulls skipped).
fn model_scores(rows: &[&PredictionRow], domain: RatingDomain) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in rows {
        if let Some(ordinal) = row.ordinal_for(domain) {
            let entry = sums.entry(row.message_id.clone()).or_insert((0.0, 0));
            entry.0 += ordinal as f64;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(mid, (sum, n))| (mid, sum / n as f64))
        .collect()
}

/// Ranks message ids by score descending, ties toward the lower message id.
fn ranked(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let mut ids: Vec<(&String, f64)> = scores.iter().map(|(m, &s)| (m, s)).collect();
    ids.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(b.0))
    });
    ids.into_iter().map(|(m, _)| m.clone()).collect()
}

fn mean_of(ids: &[String], human: &BTreeMap<String, f64>) -> f64 {
    ids.iter().map(|m| human[m]).sum::<f64>() / ids.len() as f64
}

/// Evaluates one (method, backend) cell's predictions for one domain. The
/// candidate pool is the set of messages with at least one parsed
/// prediction; all three selectors draw from that same pool.
pub fn topk_eval(
    rows: &[&PredictionRow],
    cohort: &Cohort,
    domain: RatingDomain,
    config: &TopKConfig,
) -> Result<TopKReport, RunError> {
    domain
        .require_evaluable()
        .map_err(|_| RunError::Config("top-K requested for the design domain".to_string()))?;
    if rows.is_empty() {
        return Err(RunError::Config("top-K requires predictions".to_string()));
    }
    let method = rows[0].method.clone();
    let backend = rows[0].backend.clone();
    let human_all = human_scores(cohort, domain);
    let model = model_scores(rows, domain);
    if model.is_empty() {
        return Err(RunError::Config(format!(
            "no parsed predictions for {method}@{backend} in {domain}"
        )));
    }
    // Restrict the human map to scored messages so every selector shares
    // one candidate pool.
    let human: BTreeMap<String, f64> = human_all
        .into_iter()
        .filter(|(mid, _)| model.contains_key(mid))
        .collect();
    let pool: Vec<String> = human.keys().cloned().collect();

    let model_ranking = ranked(&model);
    let oracle_ranking = ranked(&human);

    let mut rows_out = Vec::new();
    for &k in &config.k_values {
        if k == 0 || k > pool.len() {
            return Err(RunError::Config(format!(
                "top-K value {k} outside 1..={} scored messages",
                pool.len()
            )));
        }
        let model_sel: Vec<String> = model_ranking[..k].to_vec();
        let oracle_sel: Vec<String> = oracle_ranking[..k].to_vec();
        let model_mean = mean_of(&model_sel, &human);
        let oracle_mean = mean_of(&oracle_sel, &human);
        rows_out.push(TopKRow {
            selector: "model".to_string(),
            k,
            mean_human_rating: model_mean,
            lo: model_mean,
            hi: model_mean,
            selected_message_ids: model_sel,
        });
        rows_out.push(TopKRow {
            selector: "oracle".to_string(),
            k,
            mean_human_rating: oracle_mean,
            lo: oracle_mean,
            hi: oracle_mean,
            selected_message_ids: oracle_sel,
        });

        let mut draw_means = Vec::with_capacity(config.random_draws);
        let mut rng = scoped_rng(config.seed, &["topk", domain.name(), &k.to_string()]);
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        for _ in 0..config.random_draws {
            for i in 0..k {
                let j = rng.random_range(i..indices.len());
                indices.swap(i, j);
            }
            let mean = indices[..k]
                .iter()
                .map(|&i| human[&pool[i]])
                .sum::<f64>()
                / k as f64;
            draw_means.push(mean);
        }
        draw_means.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite means"));
        let random_mean = draw_means.iter().sum::<f64>() / draw_means.len() as f64;
        rows_out.push(TopKRow {
            selector: "random".to_string(),
            k,
            mean_human_rating: random_mean,
            lo: percentile_sorted(&draw_means, 0.025),
            hi: percentile_sorted(&draw_means, 0.975),
            selected_message_ids: Vec::new(),
        });
    }

    Ok(TopKReport {
        domain,
        method,
        backend,
        scored_messages: pool.len(),
        rows: rows_out,
    })
}

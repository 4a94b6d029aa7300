//! The five evaluation metrics over (truth, prediction) ordinal pairs, with
//! percentile-bootstrap confidence intervals.
//!
//! Null predictions (parse failures) count as wrong in the accuracy metrics
//! and are excluded from the confusion matrix; kappa and the F1 metrics are
//! computed on the non-null submatrix with the failure rate reported
//! alongside, so both the penalized and submatrix views are visible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{collapse, RatingDomain};
use crate::seeding::scoped_rng;
use rand::Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric undefined on an empty pair set")]
    EmptyPairSet,
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("bootstrap CI undefined: every resample was degenerate")]
    AllResamplesDegenerate,
    #[error("bootstrap requires at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("the design domain is not evaluable")]
    NotEvaluable,
}

/// A truth/prediction pair: truth is always 1..=5, prediction is 1..=5 or
/// null for an unparseable response.
pub type Pair = (u8, Option<u8>);

/// All scored pairs for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub domain: RatingDomain,
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn new(domain: RatingDomain, pairs: Vec<Pair>) -> Result<Self, MetricError> {
        domain.require_evaluable().map_err(|_| MetricError::NotEvaluable)?;
        debug_assert!(pairs.iter().all(|&(t, p)| {
            (1..=5).contains(&t) && p.is_none_or(|p| (1..=5).contains(&p))
        }));
        Ok(PairSet { domain, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn null_count(&self) -> usize {
        self.pairs.iter().filter(|(_, p)| p.is_none()).count()
    }

    pub fn parse_failure_rate(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.null_count() as f64 / self.pairs.len() as f64
        }
    }
}

/// Confusion counts over the non-null pairs plus a separate failure tally.
/// Entry `[i][j]` counts pairs with truth `i+1` and prediction `j+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
    pub failures: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|r| r.iter().sum::<usize>()).sum()
    }
}

pub fn confusion(pairs: &[Pair], n_classes: usize) -> Confusion {
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    let mut failures = 0;
    for &(truth, pred) in pairs {
        match pred {
            Some(p) => counts[truth as usize - 1][p as usize - 1] += 1,
            None => failures += 1,
        }
    }
    Confusion { counts, failures }
}

/// Exact-match accuracy; null predictions count as non-matches.
pub fn accuracy(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyPairSet);
    }
    let hits = pairs.iter().filter(|&&(t, p)| p == Some(t)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Accuracy restricted to pairs with a parsed prediction.
pub fn accuracy_nonnull(pairs: &[Pair]) -> Result<f64, MetricError> {
    let nonnull: Vec<Pair> = pairs.iter().filter(|(_, p)| p.is_some()).copied().collect();
    if nonnull.is_empty() {
        return Err(MetricError::Undefined("no parsed predictions"));
    }
    accuracy(&nonnull)
}

fn kappa_from_confusion(counts: &[Vec<usize>]) -> Result<f64, MetricError> {
    let n: usize = counts.iter().map(|r| r.iter().sum::<usize>()).sum();
    if n == 0 {
        return Err(MetricError::Undefined("no parsed predictions"));
    }
    let k = counts.len();
    let nf = n as f64;
    let mut diag = 0usize;
    let mut row = vec![0usize; k];
    let mut col = vec![0usize; k];
    for i in 0..k {
        diag += counts[i][i];
        for j in 0..k {
            row[i] += counts[i][j];
            col[j] += counts[i][j];
        }
    }
    let p_o = diag as f64 / nf;
    let p_e: f64 = (0..k).map(|i| (row[i] as f64 / nf) * (col[i] as f64 / nf)).sum();
    // All mass in one cell for both raters: chance agreement is total and
    // the usual formula is 0/0.
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (1.0 - p_o).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Cohen's kappa on the non-null submatrix.
pub fn cohen_kappa(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyPairSet);
    }
    kappa_from_confusion(&confusion(pairs, 5).counts)
}

fn macro_f1_from_confusion(counts: &[Vec<usize>]) -> Result<f64, MetricError> {
    let n: usize = counts.iter().map(|r| r.iter().sum::<usize>()).sum();
    if n == 0 {
        return Err(MetricError::Undefined("no parsed predictions"));
    }
    let k = counts.len();
    let mut sum = 0.0;
    for c in 0..k {
        let tp = counts[c][c];
        let fn_: usize = (0..k).filter(|&j| j != c).map(|j| counts[c][j]).sum();
        let fp: usize = (0..k).filter(|&i| i != c).map(|i| counts[i][c]).sum();
        let denom = 2 * tp + fp + fn_;
        // Absent and never-predicted classes contribute 0 by convention.
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(sum / k as f64)
}

/// Macro-averaged F1 over the five fixed classes, on the non-null submatrix.
/// Classes that are absent and never predicted contribute 0 to the average.
pub fn macro_f1(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyPairSet);
    }
    macro_f1_from_confusion(&confusion(pairs, 5).counts)
}

fn collapse_pairs(pairs: &[Pair]) -> Vec<Pair> {
    pairs
        .iter()
        .map(|&(t, p)| {
            let td = collapse(t).expect("truth in range") as u8 + 1;
            let pd = p.map(|p| collapse(p).expect("prediction in range") as u8 + 1);
            (td, pd)
        })
        .collect()
}

/// Directional accuracy (penalized for nulls) after three-way collapse.
pub fn directional_accuracy(pairs: &[Pair]) -> Result<f64, MetricError> {
    accuracy(&collapse_pairs(pairs))
}

/// Directional macro-F1 over the three collapsed classes (non-null pairs).
pub fn directional_macro_f1(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyPairSet);
    }
    macro_f1_from_confusion(&confusion(&collapse_pairs(pairs), 3).counts)
}

/// Both directional metrics at once.
pub fn directional_metrics(pairs: &[Pair]) -> Result<(f64, f64), MetricError> {
    Ok((directional_accuracy(pairs)?, directional_macro_f1(pairs)?))
}

/// Linear-interpolation percentile on a sorted slice, `q` in [0, 1].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Outcome of a bootstrap run: the 95% interval plus how many resamples had
/// to be skipped because the metric was undefined on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub degenerate_resamples: usize,
}

/// Percentile bootstrap (2.5th/97.5th, linear interpolation) of `metric`
/// over `n_resamples` resamples with replacement. Deterministic in
/// (pairs-as-multiset, seed): pairs are sorted before resampling and each
/// resample derives its own RNG from (seed, index).
pub fn bootstrap_ci<F>(
    metric: F,
    pairs: &[Pair],
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapCi, MetricError>
where
    F: Fn(&[Pair]) -> Result<f64, MetricError>,
{
    if pairs.len() < 2 {
        return Err(MetricError::TooFewPairs(pairs.len()));
    }
    let mut base = pairs.to_vec();
    base.sort_unstable();

    let n = base.len();
    let mut stats = Vec::with_capacity(n_resamples);
    let mut degenerate = 0usize;
    let mut resample = vec![(0u8, None); n];
    for idx in 0..n_resamples {
        let mut rng = scoped_rng(seed, &["bootstrap", &idx.to_string()]);
        for slot in resample.iter_mut() {
            *slot = base[rng.random_range(0..n)];
        }
        match metric(&resample) {
            Ok(v) => stats.push(v),
            Err(_) => degenerate += 1,
        }
    }
    if stats.is_empty() {
        return Err(MetricError::AllResamplesDegenerate);
    }
    stats.sort_unstable_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    Ok(BootstrapCi {
        lo: percentile_sorted(&stats, 0.025),
        hi: percentile_sorted(&stats, 0.975),
        degenerate_resamples: degenerate,
    })
}

/// Frequency of each ordinal 1..=5 plus the null count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub bins: [usize; 5],
    pub nulls: usize,
}

impl ScoreDistribution {
    pub fn total(&self) -> usize {
        self.bins.iter().sum::<usize>() + self.nulls
    }
}

pub fn score_distribution<I: IntoIterator<Item = Option<u8>>>(scores: I) -> ScoreDistribution {
    let mut dist = ScoreDistribution { bins: [0; 5], nulls: 0 };
    for s in scores {
        match s {
            Some(o) if (1..=5).contains(&o) => dist.bins[o as usize - 1] += 1,
            _ => dist.nulls += 1,
        }
    }
    dist
}

/// Bootstrap parameters carried through run configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_resamples: 1000, seed: 17 }
    }
}

/// One metric value with its bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWithCi {
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    /// Percentile CIs occasionally exclude the point estimate; flagged here
    /// rather than treated as an error.
    pub ci_excludes_point: bool,
}

/// Per-domain metric report mirroring one row block of the results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub domain: RatingDomain,
    pub n: usize,
    pub accuracy: MetricWithCi,
    pub directional_accuracy: MetricWithCi,
    /// Kappa / F1 on the non-null submatrix; absent when nothing parsed.
    pub cohen_kappa: Option<MetricWithCi>,
    pub macro_f1: Option<MetricWithCi>,
    pub directional_macro_f1: Option<MetricWithCi>,
    /// Accuracy over parsed predictions only, shown next to the penalized
    /// figure so parse failures cannot silently bias either view.
    pub accuracy_nonnull: Option<f64>,
    pub directional_accuracy_nonnull: Option<f64>,
    pub parse_failure_rate: f64,
    pub bootstrap_n: usize,
    pub bootstrap_seed: u64,
}

impl MetricReport {
    /// Computes every metric plus CIs for one domain's pair set.
    pub fn compute(pairs: &PairSet, bootstrap: BootstrapConfig) -> Result<Self, MetricError> {
        if pairs.is_empty() {
            return Err(MetricError::EmptyPairSet);
        }
        let p = &pairs.pairs;
        let with_ci = |metric: fn(&[Pair]) -> Result<f64, MetricError>,
                       scope: &str|
         -> Result<Option<MetricWithCi>, MetricError> {
            let value = match metric(p) {
                Ok(v) => v,
                Err(MetricError::Undefined(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let ci = if p.len() >= 2 {
                let seed = crate::seeding::derive_seed(bootstrap.seed, &[scope, pairs.domain.name()]);
                match bootstrap_ci(metric, p, bootstrap.n_resamples, seed) {
                    Ok(ci) => Some((ci.lo, ci.hi)),
                    Err(MetricError::AllResamplesDegenerate) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let excluded = ci.is_some_and(|(lo, hi)| value < lo || value > hi);
            Ok(Some(MetricWithCi { value, ci, ci_excludes_point: excluded }))
        };

        let acc = with_ci(accuracy, "accuracy")?.expect("accuracy defined for non-empty set");
        let dir_acc = with_ci(directional_accuracy, "dir_accuracy")?
            .expect("directional accuracy defined for non-empty set");
        Ok(MetricReport {
            domain: pairs.domain,
            n: p.len(),
            accuracy: acc,
            directional_accuracy: dir_acc,
            cohen_kappa: with_ci(cohen_kappa, "kappa")?,
            macro_f1: with_ci(macro_f1, "macro_f1")?,
            directional_macro_f1: with_ci(directional_macro_f1, "dir_macro_f1")?,
            accuracy_nonnull: accuracy_nonnull(p).ok(),
            directional_accuracy_nonnull: accuracy_nonnull(&collapse_pairs(p)).ok(),
            parse_failure_rate: pairs.parse_failure_rate(),
            bootstrap_n: bootstrap.n_resamples,
            bootstrap_seed: bootstrap.seed,
        })
    }
}

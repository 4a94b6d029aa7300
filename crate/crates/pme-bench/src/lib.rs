//! Shared fixtures for the pipeline benchmarks.

use pme_core::cohort::{gen_synthetic_cohort, make_split, Cohort, SplitManifest};
use pme_core::metrics::Pair;
use pme_core::seeding::scoped_rng;

use rand::Rng as _;

/// Study-shaped cohort with its default split.
pub fn study_cohort() -> (Cohort, SplitManifest) {
    let (cohort, _) = gen_synthetic_cohort(301, 124, 10, 2024);
    let manifest = make_split(&cohort, 42, 7, false).unwrap();
    (cohort, manifest)
}

/// A pair set the size of one study evaluation cell (903 pairs).
pub fn study_pairs(accuracy: f64) -> Vec<Pair> {
    let mut rng = scoped_rng(5, &["bench-pairs"]);
    (0..903)
        .map(|_| {
            let truth = rng.random_range(1..=5u8);
            let predicted = if rng.random::<f64>() < accuracy {
                truth
            } else {
                rng.random_range(1..=5u8)
            };
            (truth, Some(predicted))
        })
        .collect()
}


//! Hot-path benchmarks: metric computation with bootstrap CIs, baseline
//! fitting, prompt rendering and response parsing at study scale.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pme_bench::{study_cohort, study_pairs};
use pme_core::baselines::{fit_forest, fit_logreg, BaselineSuite, ForestParams, LogRegParams};
use pme_core::gateway::{parse_prediction, Backend, ClairvoyantBackend};
use pme_core::metrics::{accuracy, bootstrap_ci, cohen_kappa, macro_f1, MetricReport, PairSet};
use pme_core::metrics::BootstrapConfig;
use pme_core::model::RatingDomain;
use pme_core::prompting::{
    build_prompt, demo_pool_for, sample_demonstrations, DemonstrationSet, ProbMode,
    PromptContext, RenderOptions, Strategy,
};
use pme_core::seeding::scoped_rng;

fn bench_metrics(c: &mut Criterion) {
    let pairs = study_pairs(0.45);
    c.bench_function("metrics/point_suite_903", |b| {
        b.iter(|| {
            black_box(accuracy(&pairs).unwrap());
            black_box(cohen_kappa(&pairs).unwrap());
            black_box(macro_f1(&pairs).unwrap());
        })
    });
    c.bench_function("metrics/bootstrap_accuracy_1000x903", |b| {
        b.iter(|| black_box(bootstrap_ci(accuracy, &pairs, 1000, 7).unwrap()))
    });
    let pair_set = PairSet::new(RatingDomain::Content, pairs.clone()).unwrap();
    c.bench_function("metrics/full_report_903", |b| {
        b.iter(|| {
            black_box(
                MetricReport::compute(
                    &pair_set,
                    BootstrapConfig { n_resamples: 1000, seed: 7 },
                )
                .unwrap(),
            )
        })
    });
}

fn bench_baselines(c: &mut Criterion) {
    let (cohort, manifest) = study_cohort();
    let features = pme_core::baselines::default_baseline_features();
    let suite = BaselineSuite::fit(
        &cohort,
        &manifest,
        &features,
        LogRegParams::default(),
        ForestParams { n_trees: 10, ..ForestParams::default() },
    )
    .unwrap();
    let xs: Vec<_> = cohort
        .participants
        .iter()
        .map(|p| suite.encoder.encode(p))
        .collect();
    let ys: Vec<u8> = cohort
        .participants
        .iter()
        .enumerate()
        .map(|(i, _)| (i % 5 + 1) as u8)
        .collect();

    c.bench_function("baselines/logreg_fit_301", |b| {
        b.iter(|| black_box(fit_logreg(&xs, &ys, LogRegParams::default()).unwrap()))
    });
    c.bench_function("baselines/forest_fit_301x10trees", |b| {
        b.iter(|| {
            black_box(
                fit_forest(&xs, &ys, ForestParams { n_trees: 10, ..ForestParams::default() })
                    .unwrap(),
            )
        })
    });
}

fn bench_prompting(c: &mut Criterion) {
    let (cohort, manifest) = study_cohort();
    let options = RenderOptions::default();
    let pid = cohort.participants[0].participant_id.clone();
    let mid = manifest.entry(&pid).unwrap().heldout_message_ids[0].clone();
    let pool = demo_pool_for(&cohort, &manifest, &pid);
    let demos: Vec<DemonstrationSet> = RatingDomain::EVALUABLE
        .iter()
        .map(|&d| {
            let mut rng = scoped_rng(1, &["bench", d.name()]);
            sample_demonstrations(&pool, d, &mut rng, 2).unwrap()
        })
        .collect();

    c.bench_function("prompting/digital_twin_render", |b| {
        b.iter(|| {
            let ctx = PromptContext {
                cohort: &cohort,
                manifest: &manifest,
                demonstrations: Some(&demos),
                rf_priors: None,
                options: &options,
            };
            black_box(build_prompt(Strategy::DigitalTwin, &pid, &mid, &ctx).unwrap())
        })
    });
    c.bench_function("prompting/demo_pool_build", |b| {
        b.iter_batched(
            || (),
            |_| black_box(demo_pool_for(&cohort, &manifest, &pid)),
            BatchSize::SmallInput,
        )
    });

    let ctx = PromptContext {
        cohort: &cohort,
        manifest: &manifest,
        demonstrations: Some(&demos),
        rf_priors: None,
        options: &options,
    };
    let bundle = build_prompt(Strategy::DigitalTwin, &pid, &mid, &ctx).unwrap();
    let backend = ClairvoyantBackend::new(&cohort);
    let raw = backend.complete(&bundle.rendered_text, &bundle).unwrap().text;
    c.bench_function("gateway/parse_prediction", |b| {
        b.iter(|| {
            black_box(parse_prediction(
                &raw,
                Strategy::DigitalTwin,
                ProbMode::Continuous,
                &bundle.response_id,
            ))
        })
    });
}

criterion_group!(benches, bench_metrics, bench_baselines, bench_prompting);
criterion_main!(benches);

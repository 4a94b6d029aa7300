//! Golden-file tests: one frozen rendered prompt per strategy. Regenerate
//! with `PME_UPDATE_GOLDEN=1 cargo test -p pme-cli golden` after a
//! deliberate template change and review the diff.

mod common;

use std::path::PathBuf;

use pme_core::cohort::assert_no_leakage;
use pme_core::prompting::{
    build_prompt, demo_pool_for, sample_demonstrations, DemonstrationSet, PromptBundle,
    PromptContext, RenderOptions, Strategy,
};
use pme_core::seeding::scoped_rng;
use pme_core::RatingDomain;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn render_all() -> Vec<PromptBundle> {
    let (cohort, manifest) = common::golden_cohort();
    let priors = common::golden_priors();
    let options = RenderOptions::default();
    let pool = demo_pool_for(&cohort, &manifest, "p01");
    let demos: Vec<DemonstrationSet> = RatingDomain::EVALUABLE
        .iter()
        .map(|&domain| {
            let mut rng = scoped_rng(11, &["golden-demos", domain.name()]);
            sample_demonstrations(&pool, domain, &mut rng, 2).unwrap()
        })
        .collect();
    let ctx = PromptContext {
        cohort: &cohort,
        manifest: &manifest,
        demonstrations: Some(&demos),
        rf_priors: Some(&priors),
        options: &options,
    };
    Strategy::ALL
        .iter()
        .map(|&strategy| {
            let bundle = build_prompt(strategy, "p01", "m05", &ctx).unwrap();
            assert_no_leakage(&cohort, &manifest, &bundle.rendered_text, "p01", "m05").unwrap();
            bundle
        })
        .collect()
}

#[test]
fn rendered_prompts_match_golden_files() {
    let update = std::env::var_os("PME_UPDATE_GOLDEN").is_some();
    let dir = golden_dir();
    if update {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for bundle in render_all() {
        let path = dir.join(format!("{}.txt", bundle.strategy.slug()));
        if update {
            std::fs::write(&path, &bundle.rendered_text).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
        assert_eq!(
            bundle.rendered_text,
            expected,
            "prompt for {} deviates from its golden file",
            bundle.strategy
        );
    }
}

#[test]
fn golden_prompts_structural_contract() {
    for bundle in render_all() {
        let text = &bundle.rendered_text;
        assert!(!text.contains("{{"), "{}: unfilled placeholder", bundle.strategy);
        for key in &bundle.required_output_keys {
            assert!(
                text.contains(&format!("\"{key}\"")),
                "{}: contract key {key} missing from prompt",
                bundle.strategy
            );
        }
        let has_priors = text.contains("Prior Model Predictions");
        assert_eq!(has_priors, bundle.strategy == Strategy::DigitalTwinHybrid);
        // the held-out target's image marker is rendered, never the image
        if bundle.strategy != Strategy::DigitalTwin
            && bundle.strategy != Strategy::DigitalTwinHybrid
        {
            assert!(text.contains("[image unavailable: img_0005.jpg]"), "{}", bundle.strategy);
        }
    }
}

#[test]
fn golden_feature_line_counts() {
    for bundle in render_all() {
        let text = &bundle.rendered_text;
        match bundle.strategy {
            Strategy::FewShotAll => {
                for chunk in text.split("Participant features:\n").skip(1) {
                    let lines =
                        chunk.lines().take_while(|l| !l.starts_with("Message (")).count();
                    assert_eq!(lines, 23, "few_shot_all demonstration block");
                }
                assert!(text.contains("Participant metadata (full set):\nAge: 24"));
            }
            Strategy::FewShotSelect => {
                for chunk in text.split("Participant features:\n").skip(1) {
                    let lines =
                        chunk.lines().take_while(|l| !l.starts_with("Message (")).count();
                    assert_eq!(lines, 5, "few_shot_select demonstration block");
                }
                assert!(text.contains("Participant metadata (selected features only):\nAge: 24"));
            }
            Strategy::ZeroShotAll => {
                let block = text
                    .split("Participant metadata (full set):\n")
                    .nth(1)
                    .unwrap()
                    .lines()
                    .take_while(|l| !l.is_empty())
                    .count();
                assert_eq!(block, 23);
            }
            Strategy::ZeroShotSelect => {
                let block = text
                    .split("Participant metadata (selected features only):\n")
                    .nth(1)
                    .unwrap()
                    .lines()
                    .take_while(|l| !l.is_empty())
                    .count();
                assert_eq!(block, 5);
            }
            _ => {}
        }
    }
}

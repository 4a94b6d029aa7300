//! Property test: every prompt the prompting module can render, for any
//! cohort shape, seed and strategy, passes the leakage scan, and its
//! provenance never touches the participant's held-out set.

use proptest::prelude::*;

use pme_core::baselines::RfPriors;
use pme_core::cohort::{assert_no_leakage, gen_synthetic_cohort, make_split};
use pme_core::model::{label_of, RatingDomain};
use pme_core::prompting::{
    build_prompt, demo_pool_for, sample_demonstrations, DemonstrationSet, PromptContext,
    RenderOptions, Strategy,
};
use pme_core::seeding::scoped_rng;

fn priors() -> RfPriors {
    RfPriors {
        content: label_of(RatingDomain::Content, 4).unwrap(),
        design: label_of(RatingDomain::Design, 3).unwrap(),
        coping: label_of(RatingDomain::Coping, 4).unwrap(),
        quitting: label_of(RatingDomain::Quitting, 2).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn all_rendered_prompts_are_leakage_free(
        cohort_seed in 0u64..5000,
        split_seed in 0u64..5000,
        n_participants in 4usize..12,
        history_size in 2usize..9,
        stratified in any::<bool>(),
    ) {
        let (cohort, _) = gen_synthetic_cohort(n_participants, 24, 10, cohort_seed);
        let manifest = make_split(&cohort, split_seed, history_size, stratified).unwrap();
        let options = RenderOptions::default();
        let rf = priors();

        for participant in &cohort.participants {
            let pid = &participant.participant_id;
            let pool = demo_pool_for(&cohort, &manifest, pid);
            let demos: Vec<DemonstrationSet> = RatingDomain::EVALUABLE
                .iter()
                .map(|&domain| {
                    let mut rng = scoped_rng(split_seed, &["demo", pid, domain.name()]);
                    sample_demonstrations(&pool, domain, &mut rng, 2).unwrap()
                })
                .collect();
            let entry = manifest.entry(pid).unwrap();
            for mid in &entry.heldout_message_ids {
                for strategy in Strategy::ALL {
                    let ctx = PromptContext {
                        cohort: &cohort,
                        manifest: &manifest,
                        demonstrations: Some(&demos),
                        rf_priors: Some(&rf),
                        options: &options,
                    };
                    let bundle = build_prompt(strategy, pid, mid, &ctx).unwrap();
                    prop_assert!(bundle
                        .provenance
                        .iter()
                        .all(|id| !entry.heldout_message_ids.contains(id)));
                    let scan = assert_no_leakage(
                        &cohort,
                        &manifest,
                        &bundle.rendered_text,
                        pid,
                        mid,
                    );
                    prop_assert!(scan.is_ok(), "{strategy}: {:?}", scan.err());
                }
            }
        }
    }
}

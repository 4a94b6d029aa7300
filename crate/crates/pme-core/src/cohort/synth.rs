//! Synthetic cohorts for offline testing: schema-valid features, ratings
//! generated from a latent linear-utility model with response-style
//! distortion, and the retained latent parameters.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Cohort;
use crate::model::{
    round_continuous, FeatureId, LikertLabel, MessageItem, ParticipantProfile, RatingRecord,
    TherapyType,
};
use crate::seeding::scoped_rng;

/// How a participant maps latent judgments onto the 5-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStyle {
    /// Uses the scale as-is.
    Plain,
    /// Gravitates toward the midpoint.
    Midpoint,
    /// Favors the endpoints.
    Extreme,
}

/// Tunables for the generator. Defaults produce cohorts whose midpoint-style
/// participants answer 3 on well over half their ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub latent_dim: usize,
    pub bias_sd: f64,
    pub noise_sd: f64,
    pub domain_noise_sd: f64,
    /// Scale applied to (u - 3) for midpoint-style participants.
    pub midpoint_gain: f64,
    /// Scale applied to (u - 3) for extreme-style participants.
    pub extreme_gain: f64,
    pub midpoint_fraction: f64,
    pub extreme_fraction: f64,
    /// Utility shift per step of motivation-to-quit above/below its middle
    /// level; injects a learnable feature -> label signal.
    pub motivation_effect: f64,
    pub support_effect: f64,
    pub feedback_fraction: f64,
    pub missing_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            latent_dim: 4,
            bias_sd: 0.6,
            noise_sd: 0.5,
            domain_noise_sd: 0.3,
            midpoint_gain: 0.25,
            extreme_gain: 1.8,
            midpoint_fraction: 0.2,
            extreme_fraction: 0.2,
            motivation_effect: 0.35,
            support_effect: 0.2,
            feedback_fraction: 0.2,
            missing_fraction: 0.03,
        }
    }
}

/// Everything the generator drew, keyed by id, for oracle-style tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub options: SynthOptions,
    pub person_bias: BTreeMap<String, f64>,
    pub person_preference: BTreeMap<String, Vec<f64>>,
    pub response_style: BTreeMap<String, ResponseStyle>,
    pub message_features: BTreeMap<String, Vec<f64>>,
    /// Continuous utility per (participant, message, domain index).
    pub utilities: BTreeMap<(String, String), [f64; 4]>,
}

const MOTIVATION_LEVELS: [&str; 5] = [
    "Not at all motivated",
    "Slightly motivated",
    "Moderately motivated",
    "Very motivated",
    "Extremely motivated",
];
const SUPPORT_LEVELS: [&str; 4] = ["None", "Low", "Moderate", "High"];
const SEX_LEVELS: [&str; 3] = ["Male", "Female", "Non-binary"];
const ORIENTATION_LEVELS: [&str; 4] = ["Straight", "Gay or lesbian", "Bisexual", "Other"];
const RACE_LEVELS: [&str; 5] = [
    "White",
    "Black or African American",
    "Hispanic or Latino",
    "Asian",
    "Multiracial",
];
const INCOME_LEVELS: [&str; 4] = [
    "Less than $25,000",
    "$25,000-$49,999",
    "$50,000-$74,999",
    "$75,000 or more",
];
const EDUCATION_LEVELS: [&str; 4] = [
    "High school or less",
    "Some college",
    "Bachelor's degree",
    "Graduate degree",
];
const TTF_LEVELS: [&str; 4] = [
    "Within 5 minutes",
    "6-30 minutes",
    "31-60 minutes",
    "After 60 minutes",
];
const INTENTION_LEVELS: [&str; 3] = [
    "Within the next month",
    "Within 6 months",
    "No set date",
];
const YES_NO: [&str; 2] = ["Yes", "No"];

const CBT_PHRASES: [&str; 5] = [
    "try a five minute task that keeps your hands busy",
    "step outside and count ten slow breaths",
    "text a friend instead of lighting up",
    "drink a glass of water and wait out the urge",
    "make a short list of reasons you started quitting",
];
const ACT_PHRASES: [&str; 5] = [
    "notice the craving and let it pass like a wave",
    "name the feeling without judging it",
    "make room for the urge while doing what matters to you",
    "observe the thought about smoking as just a thought",
    "return your attention gently to the present moment",
];

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    // Box-Muller; two uniforms per call keeps the stream simple.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn id_width(n: usize) -> usize {
    n.max(1).to_string().len().max(4)
}

fn build_profile(pid: &str, rng: &mut ChaCha8Rng, opts: &SynthOptions) -> ParticipantProfile {
    let mut p = ParticipantProfile::new(pid);
    // A small chance of missingness per feature keeps the "unknown"
    // rendering path exercised. The keep/drop draw happens before the value
    // draw so the stream stays aligned either way.
    macro_rules! set {
        ($id:expr, $value:expr) => {{
            let keep = rng.random::<f64>() >= opts.missing_fraction;
            let value = $value;
            if keep {
                p.set($id, value);
            }
        }};
    }
    set!(FeatureId::Age, rng.random_range(18..=30).to_string());
    set!(FeatureId::Sex, SEX_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::SexualOrientation, ORIENTATION_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::RaceEthnicity, RACE_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::HouseholdIncome, INCOME_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::EducationLevel, EDUCATION_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::DaysSmokedPast30, rng.random_range(5..=30).to_string());
    set!(FeatureId::CigsPerSmokingDay, rng.random_range(1..=25).to_string());
    set!(FeatureId::LivesWithSmokers, YES_NO.choose(rng).unwrap().to_string());
    set!(FeatureId::FriendsSmoke, YES_NO.choose(rng).unwrap().to_string());
    set!(FeatureId::PastYearQuitAttempts, rng.random_range(0..=5).to_string());
    set!(FeatureId::MotivationToQuit, MOTIVATION_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::SocialSupportForQuitting, SUPPORT_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::DailySmoker, YES_NO.choose(rng).unwrap().to_string());
    set!(FeatureId::TimeToFirstCigarette, TTF_LEVELS.choose(rng).unwrap().to_string());
    set!(FeatureId::QuitIntention, INTENTION_LEVELS.choose(rng).unwrap().to_string());
    for item in [
        FeatureId::Aaq2Item1,
        FeatureId::Aaq2Item2,
        FeatureId::Aaq2Item3,
        FeatureId::Aaq2Item4,
        FeatureId::Aaq2Item5,
        FeatureId::Aaq2Item6,
        FeatureId::Aaq2Item7,
    ] {
        set!(item, rng.random_range(1..=7).to_string());
    }
    p
}

fn level_offset(value: Option<&str>, levels: &[&str], effect: f64) -> f64 {
    match value.and_then(|v| levels.iter().position(|&l| l == v)) {
        Some(pos) => effect * (pos as f64 - (levels.len() as f64 - 1.0) / 2.0),
        None => 0.0,
    }
}

/// Generates a schema-valid cohort plus the latent parameters behind it.
/// Deterministic in all arguments.
pub fn gen_synthetic_cohort(
    n_participants: usize,
    n_messages: usize,
    ratings_per_participant: usize,
    seed: u64,
) -> (Cohort, LatentTruth) {
    gen_synthetic_cohort_with(
        n_participants,
        n_messages,
        ratings_per_participant,
        seed,
        SynthOptions::default(),
    )
}

pub fn gen_synthetic_cohort_with(
    n_participants: usize,
    n_messages: usize,
    ratings_per_participant: usize,
    seed: u64,
    opts: SynthOptions,
) -> (Cohort, LatentTruth) {
    assert!(
        ratings_per_participant <= n_messages,
        "ratings_per_participant ({ratings_per_participant}) exceeds n_messages ({n_messages})"
    );
    let mw = id_width(n_messages);
    let pw = id_width(n_participants);

    // Messages alternate CBT/ACT so both pools are always available.
    let mut messages = Vec::with_capacity(n_messages);
    let mut message_features = BTreeMap::new();
    for i in 0..n_messages {
        let message_id = format!("m{:0mw$}", i + 1);
        let therapy = if i % 2 == 0 { TherapyType::Cbt } else { TherapyType::Act };
        let phrases = match therapy {
            TherapyType::Cbt => &CBT_PHRASES,
            TherapyType::Act => &ACT_PHRASES,
        };
        let mut rng = scoped_rng(seed, &["synth", "message", &message_id]);
        let phrase = phrases.choose(&mut rng).unwrap();
        let text = format!(
            "When a craving hits, {phrase}. (study message {message_id}, {} framing)",
            therapy.as_str()
        );
        let image_ref = if i % 3 == 0 { Some(format!("img_{message_id}.jpg")) } else { None };
        let feats: Vec<f64> = (0..opts.latent_dim)
            .map(|_| normal(&mut rng, 1.0 / (opts.latent_dim as f64).sqrt()))
            .collect();
        message_features.insert(message_id.clone(), feats);
        messages.push(MessageItem { message_id, text, therapy_type: therapy, image_ref });
    }
    let cbt_ids: Vec<&MessageItem> =
        messages.iter().filter(|m| m.therapy_type == TherapyType::Cbt).collect();
    let act_ids: Vec<&MessageItem> =
        messages.iter().filter(|m| m.therapy_type == TherapyType::Act).collect();

    let mut participants = Vec::with_capacity(n_participants);
    let mut ratings = Vec::new();
    let mut person_bias = BTreeMap::new();
    let mut person_preference = BTreeMap::new();
    let mut response_style = BTreeMap::new();
    let mut utilities = BTreeMap::new();

    for i in 0..n_participants {
        let pid = format!("p{:0pw$}", i + 1);
        let mut rng = scoped_rng(seed, &["synth", "participant", &pid]);
        let profile = build_profile(&pid, &mut rng, &opts);

        let style = {
            let x: f64 = rng.random();
            if x < opts.midpoint_fraction {
                ResponseStyle::Midpoint
            } else if x < opts.midpoint_fraction + opts.extreme_fraction {
                ResponseStyle::Extreme
            } else {
                ResponseStyle::Plain
            }
        };
        let bias = normal(&mut rng, opts.bias_sd)
            + level_offset(
                profile.get(FeatureId::MotivationToQuit),
                &MOTIVATION_LEVELS,
                opts.motivation_effect,
            )
            + level_offset(
                profile.get(FeatureId::SocialSupportForQuitting),
                &SUPPORT_LEVELS,
                opts.support_effect,
            );
        let pref: Vec<f64> = (0..opts.latent_dim).map(|_| normal(&mut rng, 1.0)).collect();

        // 5 CBT + 5 ACT for the study shape; otherwise an even split with
        // the odd message going to CBT.
        let n_cbt = ratings_per_participant.div_ceil(2).min(cbt_ids.len());
        let n_act = (ratings_per_participant - n_cbt).min(act_ids.len());
        let mut chosen: Vec<&MessageItem> = Vec::with_capacity(ratings_per_participant);
        chosen.extend(cbt_ids.choose_multiple(&mut rng, n_cbt));
        chosen.extend(act_ids.choose_multiple(&mut rng, n_act));
        chosen.sort_by(|a, b| a.message_id.cmp(&b.message_id));
        chosen.shuffle(&mut rng);

        for msg in chosen {
            let feats = &message_features[&msg.message_id];
            let base: f64 =
                3.0 + bias
                    + pref.iter().zip(feats).map(|(a, b)| a * b).sum::<f64>()
                    + normal(&mut rng, opts.noise_sd);
            let gain = match style {
                ResponseStyle::Plain => 1.0,
                ResponseStyle::Midpoint => opts.midpoint_gain,
                ResponseStyle::Extreme => opts.extreme_gain,
            };
            let mut us = [0.0f64; 4];
            let mut ords = [3u8; 4];
            for (d, u_slot) in us.iter_mut().enumerate() {
                let u = base + normal(&mut rng, opts.domain_noise_sd);
                let distorted = 3.0 + gain * (u - 3.0);
                *u_slot = distorted;
                ords[d] = round_continuous(distorted).expect("finite utility");
            }
            utilities.insert((pid.clone(), msg.message_id.clone()), us);
            let feedback = if rng.random::<f64>() < opts.feedback_fraction {
                Some(if ords[0] >= 4 {
                    format!("This one would actually help me ({}).", msg.message_id)
                } else {
                    format!("Not really my style ({}).", msg.message_id)
                })
            } else {
                None
            };
            ratings.push(RatingRecord {
                participant_id: pid.clone(),
                message_id: msg.message_id.clone(),
                content: LikertLabel::new(crate::model::ScaleKind::Quality, ords[0]).unwrap(),
                design: LikertLabel::new(crate::model::ScaleKind::Quality, ords[1]).unwrap(),
                coping: LikertLabel::new(crate::model::ScaleKind::Helpfulness, ords[2]).unwrap(),
                quitting: LikertLabel::new(crate::model::ScaleKind::Helpfulness, ords[3]).unwrap(),
                feedback,
            });
        }

        person_bias.insert(pid.clone(), bias);
        person_preference.insert(pid.clone(), pref);
        response_style.insert(pid.clone(), style);
        participants.push(profile);
    }

    let cohort = Cohort::new(participants, messages, ratings)
        .expect("generator output is structurally valid");
    let truth = LatentTruth {
        options: opts,
        person_bias,
        person_preference,
        response_style,
        message_features,
        utilities,
    };
    (cohort, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::validate;

    #[test]
    fn paper_shape_validates_clean() {
        let (cohort, _) = gen_synthetic_cohort(301, 124, 10, 2024);
        let report = validate(&cohort);
        assert_eq!(report.participant_count, 301);
        assert_eq!(report.message_count, 124);
        assert_eq!(report.rating_count, 3010);
        assert!(report.is_clean(), "issues: {:?}", &report.issues[..report.issues.len().min(5)]);
        assert!((report.mean_ratings_per_message - 3010.0 / 124.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_cohort() {
        let (a, ta) = gen_synthetic_cohort(10, 24, 10, 5);
        let (b, tb) = gen_synthetic_cohort(10, 24, 10, 5);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = gen_synthetic_cohort(10, 24, 10, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn midpoint_participants_gravitate_to_three() {
        let (cohort, truth) = gen_synthetic_cohort(80, 40, 10, 11);
        let mut total = 0usize;
        let mut threes = 0usize;
        for (pid, style) in &truth.response_style {
            if *style != ResponseStyle::Midpoint {
                continue;
            }
            for r in cohort.ratings_of(pid) {
                for d in crate::model::RatingDomain::ALL {
                    total += 1;
                    if r.ordinal_for(d) == 3 {
                        threes += 1;
                    }
                }
            }
        }
        assert!(total > 0, "no midpoint participants generated");
        let frac = threes as f64 / total as f64;
        assert!(frac >= 0.6, "midpoint fraction {frac:.3} < 0.6");
    }

    #[test]
    fn message_texts_are_unique_and_non_nested() {
        let (cohort, _) = gen_synthetic_cohort(5, 60, 10, 1);
        for a in &cohort.messages {
            for b in &cohort.messages {
                if a.message_id != b.message_id {
                    assert!(!a.text.contains(&b.text), "{} nests {}", a.message_id, b.message_id);
                }
            }
        }
    }

    #[test]
    #[should_panic(expected = "exceeds n_messages")]
    fn too_few_messages_panics() {
        gen_synthetic_cohort(2, 5, 10, 1);
    }
}

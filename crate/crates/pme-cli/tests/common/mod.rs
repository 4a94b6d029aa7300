//! Hand-built fixture cohort shared by the golden-prompt and acceptance
//! suites. Everything here is frozen by hand so golden files never depend
//! on generator internals.

use std::collections::BTreeMap;

use pme_core::baselines::RfPriors;
use pme_core::cohort::{Cohort, SplitEntry, SplitManifest};
use pme_core::model::{
    label_of, FeatureId, LikertLabel, MessageItem, ParticipantProfile, RatingDomain, RatingRecord,
    ScaleKind, TherapyType,
};

pub fn quality(ordinal: u8) -> LikertLabel {
    LikertLabel::new(ScaleKind::Quality, ordinal).unwrap()
}

pub fn helpfulness(ordinal: u8) -> LikertLabel {
    LikertLabel::new(ScaleKind::Helpfulness, ordinal).unwrap()
}

fn profile_full(id: &str, age: &str, sex: &str, motivation: &str) -> ParticipantProfile {
    let mut p = ParticipantProfile::new(id);
    p.set(FeatureId::Age, age);
    p.set(FeatureId::Sex, sex);
    p.set(FeatureId::SexualOrientation, "Straight");
    p.set(FeatureId::RaceEthnicity, "White");
    p.set(FeatureId::HouseholdIncome, "$25,000-$49,999");
    p.set(FeatureId::EducationLevel, "Some college");
    p.set(FeatureId::DaysSmokedPast30, "20");
    p.set(FeatureId::CigsPerSmokingDay, "12");
    p.set(FeatureId::LivesWithSmokers, "Yes");
    p.set(FeatureId::FriendsSmoke, "Yes");
    p.set(FeatureId::PastYearQuitAttempts, "2");
    p.set(FeatureId::MotivationToQuit, motivation);
    p.set(FeatureId::SocialSupportForQuitting, "Moderate");
    p.set(FeatureId::DailySmoker, "Yes");
    p.set(FeatureId::TimeToFirstCigarette, "6-30 minutes");
    p.set(FeatureId::QuitIntention, "Within the next month");
    for (i, item) in [
        FeatureId::Aaq2Item1,
        FeatureId::Aaq2Item2,
        FeatureId::Aaq2Item3,
        FeatureId::Aaq2Item4,
        FeatureId::Aaq2Item5,
        FeatureId::Aaq2Item6,
        FeatureId::Aaq2Item7,
    ]
    .iter()
    .enumerate()
    {
        p.set(*item, ((i % 7) + 1).to_string());
    }
    p
}

fn message(id: &str, therapy: TherapyType, text: &str, image: Option<&str>) -> MessageItem {
    MessageItem {
        message_id: id.to_string(),
        therapy_type: therapy,
        text: text.to_string(),
        image_ref: image.map(str::to_string),
    }
}

fn rating(
    pid: &str,
    mid: &str,
    content: u8,
    design: u8,
    coping: u8,
    quitting: u8,
    feedback: Option<&str>,
) -> RatingRecord {
    RatingRecord {
        participant_id: pid.to_string(),
        message_id: mid.to_string(),
        content: quality(content),
        design: quality(design),
        coping: helpfulness(coping),
        quitting: helpfulness(quitting),
        feedback: feedback.map(str::to_string),
    }
}

/// Three participants rating the same five messages; history = m01..m03,
/// held out = m04, m05. The history pool carries a rating-5 extreme (p02 on
/// m01) and a rating-1 extreme (p03 on m02) in every evaluable domain.
pub fn golden_cohort() -> (Cohort, SplitManifest) {
    let participants = vec![
        profile_full("p01", "24", "Female", "Very motivated"),
        {
            let mut p = profile_full("p02", "27", "Male", "Moderately motivated");
            // exercise the "unknown" rendering path
            p.features[FeatureId::FULL.iter().position(|&f| f == FeatureId::HouseholdIncome).unwrap()] = None;
            p
        },
        profile_full("p03", "19", "Non-binary", "Slightly motivated"),
    ];

    let messages = vec![
        message(
            "m01",
            TherapyType::Cbt,
            "Keep your hands busy with a quick puzzle until the urge fades.",
            None,
        ),
        message(
            "m02",
            TherapyType::Act,
            "Let the craving be there while you keep doing what matters to you.",
            None,
        ),
        message(
            "m03",
            TherapyType::Cbt,
            "Swap the cigarette break for a brisk walk around the block.",
            None,
        ),
        message(
            "m04",
            TherapyType::Act,
            "Name the urge out loud and watch it pass like weather.",
            None,
        ),
        message(
            "m05",
            TherapyType::Cbt,
            "Text a supportive friend the moment a craving starts.",
            Some("img_0005.jpg"),
        ),
    ];

    let ratings = vec![
        rating("p01", "m01", 4, 3, 4, 3, Some("this would actually work for me")),
        rating("p01", "m02", 3, 3, 2, 3, None),
        rating("p01", "m03", 2, 3, 3, 2, None),
        rating("p01", "m04", 4, 4, 4, 4, None),
        rating("p01", "m05", 5, 4, 5, 4, None),
        rating("p02", "m01", 5, 5, 5, 5, Some("exactly my kind of tip")),
        rating("p02", "m02", 4, 3, 3, 4, None),
        rating("p02", "m03", 3, 2, 4, 3, None),
        rating("p02", "m04", 2, 3, 2, 2, None),
        rating("p02", "m05", 4, 4, 4, 5, None),
        rating("p03", "m01", 3, 4, 3, 3, None),
        rating("p03", "m02", 1, 2, 1, 1, Some("does nothing for me")),
        rating("p03", "m03", 2, 2, 2, 3, None),
        rating("p03", "m04", 3, 3, 3, 3, None),
        rating("p03", "m05", 2, 2, 3, 2, None),
    ];

    let cohort = Cohort::new(participants, messages, ratings).unwrap();

    let mut entries = BTreeMap::new();
    for pid in ["p01", "p02", "p03"] {
        entries.insert(
            pid.to_string(),
            SplitEntry {
                history_message_ids: vec!["m01".into(), "m02".into(), "m03".into()],
                heldout_message_ids: vec!["m04".into(), "m05".into()],
            },
        );
    }
    let manifest = SplitManifest {
        seed: 7,
        history_size: 3,
        stratified: false,
        participants: entries,
    };
    (cohort, manifest)
}

/// Fixed RF priors for hybrid prompts, independent of any fitted model.
pub fn golden_priors() -> RfPriors {
    RfPriors {
        content: label_of(RatingDomain::Content, 4).unwrap(),
        design: label_of(RatingDomain::Design, 3).unwrap(),
        coping: label_of(RatingDomain::Coping, 4).unwrap(),
        quitting: label_of(RatingDomain::Quitting, 3).unwrap(),
    }
}

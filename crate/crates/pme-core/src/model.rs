//! Domain vocabulary shared by the whole pipeline: rating scales, ordinal
//! encoding, directional collapse, participants, messages and ratings.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by scale and ordinal conversions.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown label {label:?} for {scale:?} scale")]
    UnknownLabel { label: String, scale: ScaleKind },
    #[error("ordinal {0} out of range 1..=5")]
    OrdinalOutOfRange(i64),
    #[error("non-finite value cannot be mapped to an ordinal")]
    NonFinite,
    #[error("the design domain is not evaluable")]
    DesignNotEvaluable,
}

/// The four rating dimensions collected for every message.
///
/// Design reflects the accompanying image and is carried through ingestion
/// and prompt contracts but rejected by every evaluation entry point; see
/// [`RatingDomain::is_evaluable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingDomain {
    Content,
    Design,
    Coping,
    Quitting,
}

impl RatingDomain {
    /// All four domains, in the order they appear in the rating task.
    pub const ALL: [RatingDomain; 4] = [
        RatingDomain::Content,
        RatingDomain::Design,
        RatingDomain::Coping,
        RatingDomain::Quitting,
    ];

    /// The three domains metrics are computed on.
    pub const EVALUABLE: [RatingDomain; 3] = [
        RatingDomain::Content,
        RatingDomain::Coping,
        RatingDomain::Quitting,
    ];

    pub fn is_evaluable(self) -> bool {
        !matches!(self, RatingDomain::Design)
    }

    /// Guard used by every metric entry point.
    pub fn require_evaluable(self) -> Result<Self, ModelError> {
        if self.is_evaluable() {
            Ok(self)
        } else {
            Err(ModelError::DesignNotEvaluable)
        }
    }

    pub fn scale(self) -> ScaleKind {
        match self {
            RatingDomain::Content | RatingDomain::Design => ScaleKind::Quality,
            RatingDomain::Coping | RatingDomain::Quitting => ScaleKind::Helpfulness,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RatingDomain::Content => "content",
            RatingDomain::Design => "design",
            RatingDomain::Coping => "coping",
            RatingDomain::Quitting => "quitting",
        }
    }
}

impl fmt::Display for RatingDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which of the two 5-point scales a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Quality,
    Helpfulness,
}

const QUALITY_LABELS: [&str; 5] = ["Very poor", "Poor", "Acceptable", "Good", "Very good"];
const HELPFULNESS_LABELS: [&str; 5] = [
    "Not at all helpful",
    "Somewhat helpful",
    "Moderately helpful",
    "Very helpful",
    "Extremely helpful",
];

impl ScaleKind {
    /// Canonical label strings in ordinal order 1..=5. These exact strings
    /// are the contract used by data files and prompt parsers.
    pub fn labels(self) -> &'static [&'static str; 5] {
        match self {
            ScaleKind::Quality => &QUALITY_LABELS,
            ScaleKind::Helpfulness => &HELPFULNESS_LABELS,
        }
    }

    /// Exact canonical-label lookup.
    pub fn ordinal_of_str(self, label: &str) -> Result<u8, ModelError> {
        self.labels()
            .iter()
            .position(|&l| l == label)
            .map(|i| i as u8 + 1)
            .ok_or_else(|| ModelError::UnknownLabel {
                label: label.to_string(),
                scale: self,
            })
    }

    /// Case-insensitive lookup used when repairing model output. Returns the
    /// ordinal plus whether the match needed folding.
    pub fn ordinal_of_str_relaxed(self, label: &str) -> Result<(u8, bool), ModelError> {
        let trimmed = label.trim();
        if let Ok(ord) = self.ordinal_of_str(trimmed) {
            return Ok((ord, trimmed != label));
        }
        self.labels()
            .iter()
            .position(|&l| l.eq_ignore_ascii_case(trimmed))
            .map(|i| (i as u8 + 1, true))
            .ok_or_else(|| ModelError::UnknownLabel {
                label: label.to_string(),
                scale: self,
            })
    }
}

/// A canonical point on one of the two Likert scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LikertLabel {
    pub scale_kind: ScaleKind,
    ordinal: u8,
}

impl LikertLabel {
    pub fn new(scale_kind: ScaleKind, ordinal: u8) -> Result<Self, ModelError> {
        if (1..=5).contains(&ordinal) {
            Ok(LikertLabel { scale_kind, ordinal })
        } else {
            Err(ModelError::OrdinalOutOfRange(ordinal as i64))
        }
    }

    pub fn parse(scale_kind: ScaleKind, label: &str) -> Result<Self, ModelError> {
        let ordinal = scale_kind.ordinal_of_str(label)?;
        Ok(LikertLabel { scale_kind, ordinal })
    }

    pub fn ordinal(self) -> u8 {
        self.ordinal
    }

    pub fn label(self) -> &'static str {
        self.scale_kind.labels()[self.ordinal as usize - 1]
    }
}

impl fmt::Display for LikertLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Returns the 1-based position of a canonical label on its scale.
pub fn ordinal_of(label: LikertLabel) -> u8 {
    label.ordinal()
}

/// Inverse of [`ordinal_of`] on the domain's scale.
pub fn label_of(domain: RatingDomain, ordinal: u8) -> Result<LikertLabel, ModelError> {
    LikertLabel::new(domain.scale(), ordinal)
}

/// Three-way collapse of the 5-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Negative,
    Neutral,
    Positive,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Negative => "negative",
            Direction::Neutral => "neutral",
            Direction::Positive => "positive",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Negative => 0,
            Direction::Neutral => 1,
            Direction::Positive => 2,
        }
    }
}

/// Maps ordinals 1-2 to negative, 3 to neutral, 4-5 to positive.
pub fn collapse(ordinal: u8) -> Result<Direction, ModelError> {
    match ordinal {
        1 | 2 => Ok(Direction::Negative),
        3 => Ok(Direction::Neutral),
        4 | 5 => Ok(Direction::Positive),
        n => Err(ModelError::OrdinalOutOfRange(n as i64)),
    }
}

/// Maps a continuous model output onto the 1..=5 ordinal scale: clamp to
/// [1.0, 5.0], then round with half-up tie-breaking.
pub fn round_continuous(x: f64) -> Result<u8, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let clamped = x.clamp(1.0, 5.0);
    Ok((clamped + 0.5).floor() as u8)
}

/// The two therapy framings messages were written under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TherapyType {
    Cbt,
    Act,
}

impl TherapyType {
    pub fn as_str(self) -> &'static str {
        match self {
            TherapyType::Cbt => "CBT",
            TherapyType::Act => "ACT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CBT" => Some(TherapyType::Cbt),
            "ACT" => Some(TherapyType::Act),
            _ => None,
        }
    }
}

impl fmt::Display for TherapyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifiers for the 23 person-level features rendered into prompts, in
/// the fixed documented order, plus the derived AAQ-II total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    Age,
    Sex,
    SexualOrientation,
    RaceEthnicity,
    HouseholdIncome,
    EducationLevel,
    DaysSmokedPast30,
    CigsPerSmokingDay,
    LivesWithSmokers,
    FriendsSmoke,
    PastYearQuitAttempts,
    MotivationToQuit,
    SocialSupportForQuitting,
    DailySmoker,
    TimeToFirstCigarette,
    QuitIntention,
    Aaq2Item1,
    Aaq2Item2,
    Aaq2Item3,
    Aaq2Item4,
    Aaq2Item5,
    Aaq2Item6,
    Aaq2Item7,
    /// Derived sum of the seven AAQ-II items; not one of the 23 rendered
    /// features but available to baseline feature sets.
    Aaq2Total,
}

impl FeatureId {
    /// The full 23-feature set, in prompt-rendering order.
    pub const FULL: [FeatureId; 23] = [
        FeatureId::Age,
        FeatureId::Sex,
        FeatureId::SexualOrientation,
        FeatureId::RaceEthnicity,
        FeatureId::HouseholdIncome,
        FeatureId::EducationLevel,
        FeatureId::DaysSmokedPast30,
        FeatureId::CigsPerSmokingDay,
        FeatureId::LivesWithSmokers,
        FeatureId::FriendsSmoke,
        FeatureId::PastYearQuitAttempts,
        FeatureId::MotivationToQuit,
        FeatureId::SocialSupportForQuitting,
        FeatureId::DailySmoker,
        FeatureId::TimeToFirstCigarette,
        FeatureId::QuitIntention,
        FeatureId::Aaq2Item1,
        FeatureId::Aaq2Item2,
        FeatureId::Aaq2Item3,
        FeatureId::Aaq2Item4,
        FeatureId::Aaq2Item5,
        FeatureId::Aaq2Item6,
        FeatureId::Aaq2Item7,
    ];

    /// The five-feature "selected" subset.
    pub const SELECTED: [FeatureId; 5] = [
        FeatureId::Age,
        FeatureId::Sex,
        FeatureId::RaceEthnicity,
        FeatureId::MotivationToQuit,
        FeatureId::SocialSupportForQuitting,
    ];

    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            FeatureId::Age => "age",
            FeatureId::Sex => "sex",
            FeatureId::SexualOrientation => "sexual_orientation",
            FeatureId::RaceEthnicity => "race_ethnicity",
            FeatureId::HouseholdIncome => "household_income",
            FeatureId::EducationLevel => "education_level",
            FeatureId::DaysSmokedPast30 => "days_smoked_past30",
            FeatureId::CigsPerSmokingDay => "cigs_per_smoking_day",
            FeatureId::LivesWithSmokers => "lives_with_smokers",
            FeatureId::FriendsSmoke => "friends_smoke",
            FeatureId::PastYearQuitAttempts => "past_year_quit_attempts",
            FeatureId::MotivationToQuit => "motivation_to_quit",
            FeatureId::SocialSupportForQuitting => "social_support_for_quitting",
            FeatureId::DailySmoker => "daily_smoker",
            FeatureId::TimeToFirstCigarette => "time_to_first_cigarette",
            FeatureId::QuitIntention => "quit_intention",
            FeatureId::Aaq2Item1 => "aaq2_item1",
            FeatureId::Aaq2Item2 => "aaq2_item2",
            FeatureId::Aaq2Item3 => "aaq2_item3",
            FeatureId::Aaq2Item4 => "aaq2_item4",
            FeatureId::Aaq2Item5 => "aaq2_item5",
            FeatureId::Aaq2Item6 => "aaq2_item6",
            FeatureId::Aaq2Item7 => "aaq2_item7",
            FeatureId::Aaq2Total => "aaq2_total",
        }
    }

    /// Human-readable name used in rendered metadata blocks. The sex line is
    /// overridable at render time (see prompting::RenderOptions).
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureId::Age => "Age",
            FeatureId::Sex => "Sex",
            FeatureId::SexualOrientation => "Sexual orientation",
            FeatureId::RaceEthnicity => "Race/ethnicity",
            FeatureId::HouseholdIncome => "Household income",
            FeatureId::EducationLevel => "Education level",
            FeatureId::DaysSmokedPast30 => "Days smoked (past 30 days)",
            FeatureId::CigsPerSmokingDay => "Cigarettes per smoking day",
            FeatureId::LivesWithSmokers => "Lives with smokers",
            FeatureId::FriendsSmoke => "Friends smoke",
            FeatureId::PastYearQuitAttempts => "Past-year quit attempts",
            FeatureId::MotivationToQuit => "Motivation to quit",
            FeatureId::SocialSupportForQuitting => "Social support for quitting",
            FeatureId::DailySmoker => "Daily smoker",
            FeatureId::TimeToFirstCigarette => "Time to first cigarette",
            FeatureId::QuitIntention => "Quit intention",
            FeatureId::Aaq2Item1 => "AAQ-II item 1",
            FeatureId::Aaq2Item2 => "AAQ-II item 2",
            FeatureId::Aaq2Item3 => "AAQ-II item 3",
            FeatureId::Aaq2Item4 => "AAQ-II item 4",
            FeatureId::Aaq2Item5 => "AAQ-II item 5",
            FeatureId::Aaq2Item6 => "AAQ-II item 6",
            FeatureId::Aaq2Item7 => "AAQ-II item 7",
            FeatureId::Aaq2Total => "AAQ-II total",
        }
    }

    /// Whether baseline encoders should treat the raw string as numeric.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            FeatureId::Age
                | FeatureId::DaysSmokedPast30
                | FeatureId::CigsPerSmokingDay
                | FeatureId::PastYearQuitAttempts
                | FeatureId::Aaq2Item1
                | FeatureId::Aaq2Item2
                | FeatureId::Aaq2Item3
                | FeatureId::Aaq2Item4
                | FeatureId::Aaq2Item5
                | FeatureId::Aaq2Item6
                | FeatureId::Aaq2Item7
                | FeatureId::Aaq2Total
        )
    }

    pub fn from_column(column: &str) -> Option<Self> {
        FeatureId::FULL
            .iter()
            .chain(std::iter::once(&FeatureId::Aaq2Total))
            .copied()
            .find(|f| f.column() == column)
    }
}

/// One participant's 23 person-level features. Source strings are kept
/// verbatim so prompt rendering is bit-faithful to the data file; missing
/// values render as "unknown" and are never dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    /// Raw feature values in [`FeatureId::FULL`] order; `None` is missing.
    pub features: Vec<Option<String>>,
}

impl ParticipantProfile {
    pub fn new(participant_id: impl Into<String>) -> Self {
        ParticipantProfile {
            participant_id: participant_id.into(),
            features: vec![None; FeatureId::FULL.len()],
        }
    }

    fn slot(id: FeatureId) -> Option<usize> {
        FeatureId::FULL.iter().position(|&f| f == id)
    }

    pub fn set(&mut self, id: FeatureId, value: impl Into<String>) {
        if let Some(i) = Self::slot(id) {
            self.features[i] = Some(value.into());
        }
    }

    /// Raw string for one of the 23 stored features; `Aaq2Total` is derived.
    pub fn get(&self, id: FeatureId) -> Option<&str> {
        Self::slot(id).and_then(|i| self.features[i].as_deref())
    }

    /// Numeric view of a feature. The derived AAQ-II total is the sum of the
    /// seven item scores and is missing whenever any item is.
    pub fn numeric(&self, id: FeatureId) -> Option<f64> {
        if id == FeatureId::Aaq2Total {
            return self.aaq2_total();
        }
        self.get(id).and_then(|s| s.trim().parse::<f64>().ok())
    }

    pub fn aaq2_total(&self) -> Option<f64> {
        const ITEMS: [FeatureId; 7] = [
            FeatureId::Aaq2Item1,
            FeatureId::Aaq2Item2,
            FeatureId::Aaq2Item3,
            FeatureId::Aaq2Item4,
            FeatureId::Aaq2Item5,
            FeatureId::Aaq2Item6,
            FeatureId::Aaq2Item7,
        ];
        let mut total = 0.0;
        for item in ITEMS {
            total += self.numeric(item)?;
        }
        Some(total)
    }

    /// Value as rendered into prompts: verbatim string or "unknown".
    pub fn rendered(&self, id: FeatureId) -> &str {
        self.get(id).unwrap_or("unknown")
    }
}

/// One intervention message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageItem {
    pub message_id: String,
    pub text: String,
    pub therapy_type: TherapyType,
    pub image_ref: Option<String>,
}

/// One participant-by-message rating across all four domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub participant_id: String,
    pub message_id: String,
    pub content: LikertLabel,
    pub design: LikertLabel,
    pub coping: LikertLabel,
    pub quitting: LikertLabel,
    pub feedback: Option<String>,
}

impl RatingRecord {
    pub fn label_for(&self, domain: RatingDomain) -> LikertLabel {
        match domain {
            RatingDomain::Content => self.content,
            RatingDomain::Design => self.design,
            RatingDomain::Coping => self.coping,
            RatingDomain::Quitting => self.quitting,
        }
    }

    pub fn ordinal_for(&self, domain: RatingDomain) -> u8 {
        self.label_for(domain).ordinal()
    }
}

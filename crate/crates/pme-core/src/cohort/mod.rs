//! Cohort loading, validation, leakage-safe splits and synthetic data.

mod split;
mod synth;

pub use split::{assert_no_leakage, make_split, LeakageError, SplitEntry, SplitManifest};
pub use synth::{gen_synthetic_cohort, gen_synthetic_cohort_with, LatentTruth, ResponseStyle, SynthOptions};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    FeatureId, LikertLabel, MessageItem, ParticipantProfile, RatingDomain, RatingRecord,
    TherapyType,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset:\n{}", issues.join("\n"))]
    Invalid { issues: Vec<String> },
    #[error("split configuration error: {0}")]
    SplitConfig(String),
}

/// The full dataset: participants, messages and their cross-referenced
/// ratings. Construction enforces referential integrity and key uniqueness.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub participants: Vec<ParticipantProfile>,
    pub messages: Vec<MessageItem>,
    pub ratings: Vec<RatingRecord>,
    participant_index: HashMap<String, usize>,
    message_index: HashMap<String, usize>,
    ratings_by_participant: HashMap<String, Vec<usize>>,
}

impl Cohort {
    pub fn new(
        participants: Vec<ParticipantProfile>,
        messages: Vec<MessageItem>,
        ratings: Vec<RatingRecord>,
    ) -> Result<Self, CohortError> {
        let mut issues = Vec::new();

        let mut participant_index = HashMap::new();
        for (i, p) in participants.iter().enumerate() {
            if participant_index.insert(p.participant_id.clone(), i).is_some() {
                issues.push(format!("duplicate participant_id {:?}", p.participant_id));
            }
        }
        let mut message_index = HashMap::new();
        for (i, m) in messages.iter().enumerate() {
            if message_index.insert(m.message_id.clone(), i).is_some() {
                issues.push(format!("duplicate message_id {:?}", m.message_id));
            }
            if m.text.is_empty() {
                issues.push(format!("message {:?} has empty text", m.message_id));
            }
        }

        let mut seen_pairs = HashSet::new();
        let mut ratings_by_participant: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in ratings.iter().enumerate() {
            if !participant_index.contains_key(&r.participant_id) {
                issues.push(format!(
                    "rating row {} references unknown participant_id {:?}",
                    i + 1,
                    r.participant_id
                ));
            }
            if !message_index.contains_key(&r.message_id) {
                issues.push(format!(
                    "rating row {} references unknown message_id {:?}",
                    i + 1,
                    r.message_id
                ));
            }
            if !seen_pairs.insert((r.participant_id.clone(), r.message_id.clone())) {
                issues.push(format!(
                    "duplicate rating for participant {:?} and message {:?}",
                    r.participant_id, r.message_id
                ));
            }
            ratings_by_participant
                .entry(r.participant_id.clone())
                .or_default()
                .push(i);
        }

        if !issues.is_empty() {
            return Err(CohortError::Invalid { issues });
        }
        Ok(Cohort {
            participants,
            messages,
            ratings,
            participant_index,
            message_index,
            ratings_by_participant,
        })
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantProfile> {
        self.participant_index.get(id).map(|&i| &self.participants[i])
    }

    pub fn message(&self, id: &str) -> Option<&MessageItem> {
        self.message_index.get(id).map(|&i| &self.messages[i])
    }

    /// All ratings by one participant, in file order.
    pub fn ratings_of(&self, participant_id: &str) -> Vec<&RatingRecord> {
        self.ratings_by_participant
            .get(participant_id)
            .map(|idxs| idxs.iter().map(|&i| &self.ratings[i]).collect())
            .unwrap_or_default()
    }

    /// The rating a participant gave one message, if any.
    pub fn rating_of(&self, participant_id: &str, message_id: &str) -> Option<&RatingRecord> {
        self.ratings_of(participant_id)
            .into_iter()
            .find(|r| r.message_id == message_id)
    }
}

const MESSAGE_COLUMNS: [&str; 4] = ["message_id", "therapy_type", "text", "image_ref"];
const RATING_COLUMNS: [&str; 7] = [
    "participant_id",
    "message_id",
    "content",
    "design",
    "coping",
    "quitting",
    "feedback",
];

fn participant_columns() -> Vec<&'static str> {
    let mut cols = vec!["participant_id"];
    cols.extend(FeatureId::FULL.iter().map(|f| f.column()));
    cols
}

fn opt(field: &str) -> Option<String> {
    if field.is_empty() {
        None
    } else {
        Some(field.to_string())
    }
}

struct Loader {
    issues: Vec<String>,
    warnings: Vec<String>,
}

impl Loader {
    fn reader(&self, path: &Path) -> Result<csv::Reader<std::fs::File>, CohortError> {
        csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| CohortError::Io {
                path: path.display().to_string(),
                source: match e.into_kind() {
                    csv::ErrorKind::Io(io) => io,
                    other => std::io::Error::other(format!("{other:?}")),
                },
            })
    }

    fn check_header(&mut self, file: &str, expected: &[&str], got: &csv::StringRecord) {
        let got: Vec<&str> = got.iter().collect();
        for col in expected {
            if !got.contains(col) {
                self.issues.push(format!("{file}: missing column {col:?}"));
            }
        }
    }
}

/// Loads the three dataset files. Schema problems are accumulated and
/// reported together (with line numbers), not fail-fast. Returns the cohort
/// plus advisory warnings (e.g. an empty ratings file).
pub fn load_cohort(
    participants_path: &Path,
    messages_path: &Path,
    ratings_path: &Path,
) -> Result<(Cohort, Vec<String>), CohortError> {
    let mut loader = Loader { issues: Vec::new(), warnings: Vec::new() };

    // participants.csv
    let mut participants = Vec::new();
    {
        let mut rdr = loader.reader(participants_path)?;
        let header = rdr.headers().map_err(|e| CohortError::Io {
            path: participants_path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?.clone();
        loader.check_header("participants.csv", &participant_columns(), &header);
        let col_of: HashMap<&str, usize> =
            header.iter().enumerate().map(|(i, c)| (c, i)).collect();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no + 2;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    loader.issues.push(format!("participants.csv line {line}: {e}"));
                    continue;
                }
            };
            let id = col_of
                .get("participant_id")
                .and_then(|&i| record.get(i))
                .unwrap_or_default();
            if id.is_empty() {
                loader.issues.push(format!("participants.csv line {line}: empty participant_id"));
                continue;
            }
            let mut profile = ParticipantProfile::new(id);
            for feature in FeatureId::FULL {
                if let Some(&i) = col_of.get(feature.column()) {
                    if let Some(value) = record.get(i).and_then(opt) {
                        profile.set(feature, value);
                    }
                }
            }
            participants.push(profile);
        }
    }

    // messages.csv
    let mut messages = Vec::new();
    {
        let mut rdr = loader.reader(messages_path)?;
        let header = rdr.headers().map_err(|e| CohortError::Io {
            path: messages_path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?.clone();
        loader.check_header("messages.csv", &MESSAGE_COLUMNS[..3], &header);
        let col_of: HashMap<&str, usize> =
            header.iter().enumerate().map(|(i, c)| (c, i)).collect();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no + 2;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    loader.issues.push(format!("messages.csv line {line}: {e}"));
                    continue;
                }
            };
            let field = |name: &str| col_of.get(name).and_then(|&i| record.get(i)).unwrap_or("");
            let therapy = match TherapyType::parse(field("therapy_type")) {
                Some(t) => t,
                None => {
                    loader.issues.push(format!(
                        "messages.csv line {line}: therapy_type must be CBT or ACT, got {:?}",
                        field("therapy_type")
                    ));
                    continue;
                }
            };
            let text = field("text");
            if text.is_empty() {
                loader.issues.push(format!("messages.csv line {line}: empty text"));
                continue;
            }
            messages.push(MessageItem {
                message_id: field("message_id").to_string(),
                therapy_type: therapy,
                text: text.to_string(),
                image_ref: opt(field("image_ref")),
            });
        }
    }

    // ratings.csv
    let mut ratings = Vec::new();
    {
        let mut rdr = loader.reader(ratings_path)?;
        let header = rdr.headers().map_err(|e| CohortError::Io {
            path: ratings_path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?.clone();
        loader.check_header("ratings.csv", &RATING_COLUMNS[..6], &header);
        let col_of: HashMap<&str, usize> =
            header.iter().enumerate().map(|(i, c)| (c, i)).collect();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no + 2;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    loader.issues.push(format!("ratings.csv line {line}: {e}"));
                    continue;
                }
            };
            let field = |name: &str| col_of.get(name).and_then(|&i| record.get(i)).unwrap_or("");
            let mut label = |domain: RatingDomain, name: &str| -> Option<LikertLabel> {
                match LikertLabel::parse(domain.scale(), field(name)) {
                    Ok(l) => Some(l),
                    Err(e) => {
                        loader.issues.push(format!("ratings.csv line {line}, {name}: {e}"));
                        None
                    }
                }
            };
            let content = label(RatingDomain::Content, "content");
            let design = label(RatingDomain::Design, "design");
            let coping = label(RatingDomain::Coping, "coping");
            let quitting = label(RatingDomain::Quitting, "quitting");
            let (Some(content), Some(design), Some(coping), Some(quitting)) =
                (content, design, coping, quitting)
            else {
                continue;
            };
            ratings.push(RatingRecord {
                participant_id: field("participant_id").to_string(),
                message_id: field("message_id").to_string(),
                content,
                design,
                coping,
                quitting,
                feedback: opt(field("feedback")),
            });
        }
        if ratings.is_empty() && loader.issues.is_empty() {
            loader.warnings.push("ratings file contains no ratings".to_string());
        }
    }

    if !loader.issues.is_empty() {
        return Err(CohortError::Invalid { issues: loader.issues });
    }
    let cohort = Cohort::new(participants, messages, ratings)?;
    Ok((cohort, loader.warnings))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CohortError> {
    csv::Writer::from_path(path).map_err(|e| CohortError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Writes the cohort back out in the documented three-file layout.
/// `load_cohort` of the written files reproduces the cohort exactly.
pub fn save_cohort(
    cohort: &Cohort,
    participants_path: &Path,
    messages_path: &Path,
    ratings_path: &Path,
) -> Result<(), CohortError> {
    let io_err = |path: &Path, e: csv::Error| CohortError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };

    let mut w = csv_writer(participants_path)?;
    w.write_record(participant_columns()).map_err(|e| io_err(participants_path, e))?;
    for p in &cohort.participants {
        let mut row = vec![p.participant_id.clone()];
        for f in FeatureId::FULL {
            row.push(p.get(f).unwrap_or("").to_string());
        }
        w.write_record(&row).map_err(|e| io_err(participants_path, e))?;
    }
    w.flush().map_err(|e| CohortError::Io {
        path: participants_path.display().to_string(),
        source: e,
    })?;

    let mut w = csv_writer(messages_path)?;
    w.write_record(MESSAGE_COLUMNS).map_err(|e| io_err(messages_path, e))?;
    for m in &cohort.messages {
        w.write_record([
            m.message_id.as_str(),
            m.therapy_type.as_str(),
            m.text.as_str(),
            m.image_ref.as_deref().unwrap_or(""),
        ])
        .map_err(|e| io_err(messages_path, e))?;
    }
    w.flush().map_err(|e| CohortError::Io {
        path: messages_path.display().to_string(),
        source: e,
    })?;

    let mut w = csv_writer(ratings_path)?;
    w.write_record(RATING_COLUMNS).map_err(|e| io_err(ratings_path, e))?;
    for r in &cohort.ratings {
        w.write_record([
            r.participant_id.as_str(),
            r.message_id.as_str(),
            r.content.label(),
            r.design.label(),
            r.coping.label(),
            r.quitting.label(),
            r.feedback.as_deref().unwrap_or(""),
        ])
        .map_err(|e| io_err(ratings_path, e))?;
    }
    w.flush().map_err(|e| CohortError::Io {
        path: ratings_path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Structural expectations checked by [`validate`]. Defaults match the study
/// design: 10 ratings per participant, 5 CBT and 5 ACT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationExpectations {
    pub ratings_per_participant: usize,
    pub cbt_per_participant: usize,
    pub act_per_participant: usize,
}

impl Default for ValidationExpectations {
    fn default() -> Self {
        ValidationExpectations {
            ratings_per_participant: 10,
            cbt_per_participant: 5,
            act_per_participant: 5,
        }
    }
}

/// Advisory structural report; violations are content, not failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub participant_count: usize,
    pub message_count: usize,
    pub rating_count: usize,
    /// ratings-per-participant -> number of participants
    pub ratings_per_participant: BTreeMap<usize, usize>,
    /// participant -> (cbt count, act count)
    pub cbt_act_balance: BTreeMap<String, (usize, usize)>,
    pub mean_ratings_per_message: f64,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate(cohort: &Cohort) -> ValidationReport {
    validate_with(cohort, ValidationExpectations::default())
}

pub fn validate_with(cohort: &Cohort, expect: ValidationExpectations) -> ValidationReport {
    let mut issues = Vec::new();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut balance: BTreeMap<String, (usize, usize)> = BTreeMap::new();

    for p in &cohort.participants {
        let ratings = cohort.ratings_of(&p.participant_id);
        *histogram.entry(ratings.len()).or_default() += 1;
        if ratings.len() != expect.ratings_per_participant {
            issues.push(format!(
                "participant {} has {} ratings, expected {}",
                p.participant_id,
                ratings.len(),
                expect.ratings_per_participant
            ));
        }
        let mut cbt = 0;
        let mut act = 0;
        for r in &ratings {
            match cohort.message(&r.message_id).map(|m| m.therapy_type) {
                Some(TherapyType::Cbt) => cbt += 1,
                Some(TherapyType::Act) => act += 1,
                None => {}
            }
        }
        balance.insert(p.participant_id.clone(), (cbt, act));
        if cbt != expect.cbt_per_participant || act != expect.act_per_participant {
            issues.push(format!(
                "participant {} rated {} CBT / {} ACT messages, expected {} / {}",
                p.participant_id, cbt, act, expect.cbt_per_participant, expect.act_per_participant
            ));
        }
    }

    let mean_per_message = if cohort.messages.is_empty() {
        0.0
    } else {
        cohort.ratings.len() as f64 / cohort.messages.len() as f64
    };

    ValidationReport {
        participant_count: cohort.participants.len(),
        message_count: cohort.messages.len(),
        rating_count: cohort.ratings.len(),
        ratings_per_participant: histogram,
        cbt_act_balance: balance,
        mean_ratings_per_message: mean_per_message,
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScaleKind;

    fn tiny_cohort() -> Cohort {
        let mut p = ParticipantProfile::new("p0001");
        p.set(FeatureId::Age, "24");
        let messages = vec![
            MessageItem {
                message_id: "m0001".into(),
                text: "Take a short walk when a craving hits.".into(),
                therapy_type: TherapyType::Cbt,
                image_ref: None,
            },
            MessageItem {
                message_id: "m0002".into(),
                text: "Notice the craving and let it pass without judgment.".into(),
                therapy_type: TherapyType::Act,
                image_ref: Some("img_m0002.jpg".into()),
            },
        ];
        let label = |s: ScaleKind, o: u8| LikertLabel::new(s, o).unwrap();
        let ratings = vec![RatingRecord {
            participant_id: "p0001".into(),
            message_id: "m0001".into(),
            content: label(ScaleKind::Quality, 4),
            design: label(ScaleKind::Quality, 3),
            coping: label(ScaleKind::Helpfulness, 5),
            quitting: label(ScaleKind::Helpfulness, 4),
            feedback: Some("liked it".into()),
        }];
        Cohort::new(vec![p], messages, ratings).unwrap()
    }

    #[test]
    fn dangling_foreign_key_rejected() {
        let c = tiny_cohort();
        let mut ratings = c.ratings.clone();
        ratings[0].message_id = "m9999".into();
        let err = Cohort::new(c.participants.clone(), c.messages.clone(), ratings).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("m9999"), "{msg}");
    }

    #[test]
    fn duplicate_pair_rejected() {
        let c = tiny_cohort();
        let mut ratings = c.ratings.clone();
        ratings.push(ratings[0].clone());
        assert!(Cohort::new(c.participants.clone(), c.messages.clone(), ratings).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let cohort = tiny_cohort();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("participants.csv");
        let m = dir.path().join("messages.csv");
        let r = dir.path().join("ratings.csv");
        save_cohort(&cohort, &p, &m, &r).unwrap();
        let (loaded, warnings) = load_cohort(&p, &m, &r).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(loaded, cohort);
    }

    #[test]
    fn empty_ratings_file_warns() {
        let cohort = tiny_cohort();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("participants.csv");
        let m = dir.path().join("messages.csv");
        let r = dir.path().join("ratings.csv");
        let empty = Cohort::new(cohort.participants.clone(), cohort.messages.clone(), vec![]).unwrap();
        save_cohort(&empty, &p, &m, &r).unwrap();
        let (loaded, warnings) = load_cohort(&p, &m, &r).unwrap();
        assert_eq!(loaded.ratings.len(), 0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn bad_rows_reported_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("participants.csv");
        let m = dir.path().join("messages.csv");
        let r = dir.path().join("ratings.csv");
        std::fs::write(&p, "participant_id,age\np0001,24\n").unwrap();
        std::fs::write(&m, "message_id,therapy_type,text\nm0001,CBT,hello\nm0002,XXX,hi\n").unwrap();
        std::fs::write(
            &r,
            "participant_id,message_id,content,design,coping,quitting\n\
             p0001,m0001,Good,Good,Very helpful,Weird label\n",
        )
        .unwrap();
        let err = load_cohort(&p, &m, &r).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("messages.csv line 3"), "{msg}");
        assert!(msg.contains("ratings.csv line 2"), "{msg}");
        assert!(msg.contains("Weird label"), "{msg}");
    }

    #[test]
    fn synthetic_cohort_round_trips_through_csv() {
        let (cohort, _) = super::gen_synthetic_cohort(12, 24, 10, 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("participants.csv");
        let m = dir.path().join("messages.csv");
        let r = dir.path().join("ratings.csv");
        save_cohort(&cohort, &p, &m, &r).unwrap();
        let (loaded, _) = load_cohort(&p, &m, &r).unwrap();
        assert_eq!(loaded, cohort);
    }

    #[test]
    fn validation_flags_count_and_balance() {
        let c = tiny_cohort();
        let report = validate(&c);
        assert_eq!(report.participant_count, 1);
        assert!(!report.is_clean());
        assert!(report
            .issues
            .iter()
            .any(|i| i.contains("has 1 ratings, expected 10")));
        assert_eq!(report.cbt_act_balance["p0001"], (1, 0));
    }
}

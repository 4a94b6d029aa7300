//! Supervised baselines over participant-level features: L2-regularized
//! multinomial logistic regression and a from-scratch random forest, plus
//! the feature encoder they share and the RF-prior hook used by the hybrid
//! digital-twin prompt.

mod encoder;
mod forest;
mod logreg;

pub use encoder::{ColumnKind, ColumnSpec, Encoder, FeatureVector};
pub use logreg::N_CLASSES;
pub use forest::{fit_forest, DecisionTree, ForestModel, ForestParams, MaxFeatures, Node};
pub use logreg::{fit_logreg, objective_grad, objective_loss, LogRegModel, LogRegParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, SplitManifest};
use crate::model::{label_of, FeatureId, LikertLabel, ParticipantProfile, RatingDomain};
use crate::seeding::derive_seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("empty training data")]
    EmptyTrainingData,
    #[error("no fitted model for domain {0}")]
    MissingDomainModel(RatingDomain),
    #[error("participant {0} not found")]
    UnknownParticipant(String),
}

/// The default baseline feature list: age, sex, race/ethnicity, nicotine
/// dependence (time to first cigarette), cigarettes per day, and
/// psychological flexibility (AAQ-II total).
pub fn default_baseline_features() -> Vec<FeatureId> {
    vec![
        FeatureId::Age,
        FeatureId::Sex,
        FeatureId::RaceEthnicity,
        FeatureId::TimeToFirstCigarette,
        FeatureId::CigsPerSmokingDay,
        FeatureId::Aaq2Total,
    ]
}

/// Class probabilities over ordinals 1..=5.
pub type ClassProbs = [f64; 5];

/// Argmax with ties broken toward the lower ordinal, keeping every
/// prediction deterministic.
pub fn argmax_ordinal(probs: &ClassProbs) -> u8 {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best as u8 + 1
}

/// Both baseline families fitted per domain on pooled history ratings.
/// Logistic regression covers the evaluable domains; forests cover all four
/// so the hybrid prompt's design slot can be filled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSuite {
    pub features: Vec<FeatureId>,
    pub encoder: Encoder,
    pub encoder_warnings: Vec<String>,
    pub logreg: BTreeMap<RatingDomain, LogRegModel>,
    pub forest: BTreeMap<RatingDomain, ForestModel>,
}

impl BaselineSuite {
    /// Fits encoder and per-domain models on the manifest's history ratings
    /// only. Held-out labels are never touched.
    pub fn fit(
        cohort: &Cohort,
        manifest: &SplitManifest,
        features: &[FeatureId],
        logreg_params: LogRegParams,
        forest_params: ForestParams,
    ) -> Result<Self, BaselineError> {
        let mut profiles: Vec<&ParticipantProfile> = Vec::new();
        let mut history: Vec<(&ParticipantProfile, &crate::model::RatingRecord)> = Vec::new();
        for (pid, entry) in &manifest.participants {
            let Some(profile) = cohort.participant(pid) else { continue };
            profiles.push(profile);
            for rating in cohort.ratings_of(pid) {
                if entry.history_message_ids.contains(&rating.message_id) {
                    history.push((profile, rating));
                }
            }
        }
        if history.is_empty() {
            return Err(BaselineError::EmptyTrainingData);
        }

        let (encoder, encoder_warnings) = Encoder::fit(&profiles, features);
        let xs: Vec<FeatureVector> =
            history.iter().map(|(p, _)| encoder.encode(p)).collect();

        let mut logreg = BTreeMap::new();
        let mut forest = BTreeMap::new();
        for domain in RatingDomain::ALL {
            let ys: Vec<u8> = history.iter().map(|(_, r)| r.ordinal_for(domain)).collect();
            if domain.is_evaluable() {
                logreg.insert(domain, logreg::fit_logreg(&xs, &ys, logreg_params)?);
            }
            let mut params = forest_params;
            params.seed = derive_seed(forest_params.seed, &["forest", domain.name()]);
            forest.insert(domain, forest::fit_forest(&xs, &ys, params)?);
        }

        Ok(BaselineSuite {
            features: features.to_vec(),
            encoder,
            encoder_warnings,
            logreg,
            forest,
        })
    }

    pub fn predict_logreg(
        &self,
        domain: RatingDomain,
        profile: &ParticipantProfile,
    ) -> Result<(LikertLabel, ClassProbs), BaselineError> {
        let model = self
            .logreg
            .get(&domain)
            .ok_or(BaselineError::MissingDomainModel(domain))?;
        let probs = model.predict_proba(&self.encoder.encode(profile));
        let ordinal = argmax_ordinal(&probs);
        Ok((label_of(domain, ordinal).expect("argmax in range"), probs))
    }

    pub fn predict_forest(
        &self,
        domain: RatingDomain,
        profile: &ParticipantProfile,
    ) -> Result<(LikertLabel, ClassProbs), BaselineError> {
        let model = self
            .forest
            .get(&domain)
            .ok_or(BaselineError::MissingDomainModel(domain))?;
        let probs = model.predict_proba(&self.encoder.encode(profile));
        let ordinal = argmax_ordinal(&probs);
        Ok((label_of(domain, ordinal).expect("argmax in range"), probs))
    }

    /// Structured-text dump of the fitted suite (encoder spec, weights,
    /// trees) for reproducibility audits.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }
}

/// Canonical label strings from the per-domain forests, ready for template
/// injection into the hybrid digital-twin prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfPriors {
    pub content: LikertLabel,
    pub design: LikertLabel,
    pub coping: LikertLabel,
    pub quitting: LikertLabel,
}

impl RfPriors {
    pub fn label_for(&self, domain: RatingDomain) -> LikertLabel {
        match domain {
            RatingDomain::Content => self.content,
            RatingDomain::Design => self.design,
            RatingDomain::Coping => self.coping,
            RatingDomain::Quitting => self.quitting,
        }
    }
}

pub fn rf_priors_for(
    suite: &BaselineSuite,
    profile: &ParticipantProfile,
) -> Result<RfPriors, BaselineError> {
    Ok(RfPriors {
        content: suite.predict_forest(RatingDomain::Content, profile)?.0,
        design: suite.predict_forest(RatingDomain::Design, profile)?.0,
        coping: suite.predict_forest(RatingDomain::Coping, profile)?.0,
        quitting: suite.predict_forest(RatingDomain::Quitting, profile)?.0,
    })
}

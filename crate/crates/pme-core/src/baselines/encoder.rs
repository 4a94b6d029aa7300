//! Feature encoding: numeric columns standardized with training statistics,
//! categoricals one-hot over training-observed levels. Unseen test levels
//! encode as an all-zero group; missing numerics encode as the training
//! mean (0 after standardization).

use serde::{Deserialize, Serialize};

use crate::model::{FeatureId, ParticipantProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    /// (value - mean) / sd with training statistics; sd 0 encodes 0.
    Numeric { mean: f64, sd: f64 },
    /// 1.0 when the source value equals `level`.
    OneHot { level: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub feature: FeatureId,
    pub kind: ColumnKind,
}

/// An encoded profile. Column order always matches the fitted encoder's
/// [`Encoder::columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<ColumnSpec>,
}

impl Encoder {
    /// Fits on training profiles. Returns warnings for zero-variance numeric
    /// columns, which are kept but encode as constant 0.
    pub fn fit(train: &[&ParticipantProfile], features: &[FeatureId]) -> (Self, Vec<String>) {
        let mut columns = Vec::new();
        let mut warnings = Vec::new();
        for &feature in features {
            if feature.is_numeric() {
                let values: Vec<f64> = train.iter().filter_map(|p| p.numeric(feature)).collect();
                let mean = if values.is_empty() {
                    0.0
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                };
                // population variance, so two training points standardize
                // to exactly -1 and +1
                let var = if values.is_empty() {
                    0.0
                } else {
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / values.len() as f64
                };
                let sd = var.sqrt();
                if sd == 0.0 {
                    warnings.push(format!(
                        "numeric feature {} has zero variance in training data; encoded as 0",
                        feature.column()
                    ));
                }
                columns.push(ColumnSpec { feature, kind: ColumnKind::Numeric { mean, sd } });
            } else {
                let mut levels: Vec<String> = train
                    .iter()
                    .filter_map(|p| p.get(feature))
                    .map(str::to_string)
                    .collect();
                levels.sort_unstable();
                levels.dedup();
                for level in levels {
                    columns.push(ColumnSpec { feature, kind: ColumnKind::OneHot { level } });
                }
            }
        }
        (Encoder { columns }, warnings)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn encode(&self, profile: &ParticipantProfile) -> FeatureVector {
        let values = self
            .columns
            .iter()
            .map(|col| match &col.kind {
                ColumnKind::Numeric { mean, sd } => match profile.numeric(col.feature) {
                    Some(v) if *sd > 0.0 => (v - mean) / sd,
                    _ => 0.0,
                },
                ColumnKind::OneHot { level } => {
                    if profile.get(col.feature) == Some(level.as_str()) {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        FeatureVector { values }
    }
}

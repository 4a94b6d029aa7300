//! The run configuration: one structured TOML file whose keys mirror the
//! pipeline's knobs, with dotted-path overrides applied by the CLI.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{BaselineOptions, MatrixOptions, RunError, TopKConfig};
use crate::baselines::{default_baseline_features, ForestParams, LogRegParams, MaxFeatures};
use crate::gateway::BackendSpec;
use crate::metrics::BootstrapConfig;
use crate::model::FeatureId;
use crate::prompting::{ProbMode, RenderOptions, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub participants: PathBuf,
    pub messages: PathBuf,
    pub ratings: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: u64,
    pub history_size: usize,
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { seed: 42, history_size: 7, stratified: false }
    }
}

// flatten and deny_unknown_fields cannot combine; unknown backend keys
// surface as BackendSpec parse errors instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEntry {
    /// Optional display name; defaults to the spec descriptor.
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub enabled: bool,
    /// Feature column names; defaults to the six participant-level features.
    pub features: Vec<String>,
    pub logreg_c: f64,
    pub forest_trees: usize,
    pub forest_seed: u64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            enabled: true,
            features: default_baseline_features()
                .iter()
                .map(|f| f.column().to_string())
                .collect(),
            logreg_c: 1.0,
            forest_trees: 100,
            forest_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub max_inflight: usize,
    pub cache: bool,
    /// Per-cell transport failure fraction above which the run aborts.
    pub max_transport_failure_rate: f64,
    pub predict_all_messages: bool,
    /// Write every rendered prompt under prompts/ for audits.
    pub audit_prompts: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            max_inflight: 4,
            cache: true,
            max_transport_failure_rate: 0.25,
            predict_all_messages: false,
            audit_prompts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub n: usize,
    pub seed: u64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection { n: 1000, seed: 17 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotSection {
    /// Demonstrations per domain (a high/low pair by default, up to 10).
    pub count: usize,
    pub seed: u64,
}

impl Default for FewshotSection {
    fn default() -> Self {
        FewshotSection { count: 2, seed: 13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub sex_field_label: String,
    pub prob_mode: ProbMode,
}

impl Default for PromptSection {
    fn default() -> Self {
        PromptSection { sex_field_label: "Sex".to_string(), prob_mode: ProbMode::Continuous }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopkSection {
    pub k: Vec<usize>,
    pub random_draws: usize,
    pub seed: u64,
    /// Method whose predictions drive the model selector.
    pub method: String,
    /// Backend descriptor; defaults to the first configured backend.
    pub backend: Option<String>,
}

impl Default for TopkSection {
    fn default() -> Self {
        TopkSection {
            k: vec![5, 10, 15, 20, 25],
            random_draws: 1000,
            seed: 23,
            method: Strategy::DigitalTwin.slug().to_string(),
            backend: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub strategies: Vec<Strategy>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { sizes: (1..=7).collect(), strategies: vec![Strategy::DigitalTwin] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub backends: Vec<BackendEntry>,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub fewshot: FewshotSection,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub topk: TopkSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn baseline_features(&self) -> Result<Vec<FeatureId>, RunError> {
        self.baselines
            .features
            .iter()
            .map(|name| {
                FeatureId::from_column(name).ok_or_else(|| {
                    RunError::Config(format!("unknown baseline feature column {name:?}"))
                })
            })
            .collect()
    }

    /// Resolves the config into the options `run_matrix` consumes.
    pub fn matrix_options(&self) -> Result<MatrixOptions, RunError> {
        if !(1..=10).contains(&self.fewshot.count) {
            return Err(RunError::Config(format!(
                "fewshot.count must be between 1 and 10, got {}",
                self.fewshot.count
            )));
        }
        if self.run.max_inflight < 1 {
            return Err(RunError::Config("run.max_inflight must be at least 1".to_string()));
        }
        let baselines = if self.baselines.enabled {
            Some(BaselineOptions {
                features: self.baseline_features()?,
                logreg: LogRegParams { c: self.baselines.logreg_c, ..LogRegParams::default() },
                forest: ForestParams {
                    n_trees: self.baselines.forest_trees,
                    max_features: MaxFeatures::Sqrt,
                    bootstrap: true,
                    min_samples_split: 2,
                    seed: self.baselines.forest_seed,
                },
            })
        } else {
            None
        };
        Ok(MatrixOptions {
            strategies: self.strategies.clone(),
            render: RenderOptions {
                sex_field_label: self.prompt.sex_field_label.clone(),
                prob_mode: self.prompt.prob_mode,
            },
            fewshot_count: self.fewshot.count,
            fewshot_seed: self.fewshot.seed,
            max_inflight: self.run.max_inflight,
            bootstrap: BootstrapConfig {
                n_resamples: self.bootstrap.n,
                seed: self.bootstrap.seed,
            },
            baselines,
            predict_all_messages: self.run.predict_all_messages,
            max_transport_failure_rate: self.run.max_transport_failure_rate,
            audit_dir: self
                .run
                .audit_prompts
                .then(|| self.output.dir.join("prompts")),
        })
    }

    pub fn topk_config(&self) -> TopKConfig {
        TopKConfig {
            k_values: self.topk.k.clone(),
            random_draws: self.topk.random_draws,
            seed: self.topk.seed,
        }
    }
}

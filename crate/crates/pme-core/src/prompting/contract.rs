//! The JSON output contract each strategy requests from the model.

use serde::{Deserialize, Serialize};

use super::{ProbMode, Strategy};

/// What kind of value a contract key must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    /// Echo of a pipeline-supplied value (response_id, input_message).
    Echo,
    /// A canonical Likert label for the key's rating domain.
    CategoricalLabel,
    /// A real number in [1.0, 5.0].
    ContinuousScore,
    /// An object mapping every canonical label of the scale to a score.
    CategoryLikelihoods,
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputContract {
    pub keys: Vec<(&'static str, ValueDomain)>,
}

impl OutputContract {
    pub fn domain_of(&self, key: &str) -> Option<ValueDomain> {
        self.keys.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
    }
}

/// Required keys and value domains per strategy. Every contract includes
/// `response_id`; the prediction keys cover all four rating dimensions
/// (design included, though it is never evaluated).
pub fn expected_output_contract(strategy: Strategy, prob_mode: ProbMode) -> OutputContract {
    let keys = match strategy {
        Strategy::ZeroShotAll
        | Strategy::ZeroShotSelect
        | Strategy::FewShotAll
        | Strategy::FewShotSelect => vec![
            ("response_id", ValueDomain::Echo),
            ("input_message", ValueDomain::Echo),
            ("image_description", ValueDomain::FreeText),
            ("predicted_content", ValueDomain::CategoricalLabel),
            ("predicted_design", ValueDomain::CategoricalLabel),
            ("predicted_coping", ValueDomain::CategoricalLabel),
            ("predicted_quitting", ValueDomain::CategoricalLabel),
            ("explanation", ValueDomain::FreeText),
        ],
        Strategy::ZeroShotProb => match prob_mode {
            ProbMode::Continuous => vec![
                ("response_id", ValueDomain::Echo),
                ("input_message", ValueDomain::Echo),
                ("image_description", ValueDomain::FreeText),
                ("predicted_content", ValueDomain::ContinuousScore),
                ("predicted_design", ValueDomain::ContinuousScore),
                ("predicted_coping", ValueDomain::ContinuousScore),
                ("predicted_quitting", ValueDomain::ContinuousScore),
                ("confidence_content", ValueDomain::ContinuousScore),
                ("confidence_design", ValueDomain::ContinuousScore),
                ("confidence_coping", ValueDomain::ContinuousScore),
                ("confidence_quitting", ValueDomain::ContinuousScore),
                ("explanation", ValueDomain::FreeText),
            ],
            ProbMode::PerCategory => vec![
                ("response_id", ValueDomain::Echo),
                ("input_message", ValueDomain::Echo),
                ("image_description", ValueDomain::FreeText),
                ("predicted_content", ValueDomain::CategoryLikelihoods),
                ("predicted_design", ValueDomain::CategoryLikelihoods),
                ("predicted_coping", ValueDomain::CategoryLikelihoods),
                ("predicted_quitting", ValueDomain::CategoryLikelihoods),
                ("explanation", ValueDomain::FreeText),
            ],
        },
        Strategy::DigitalTwin | Strategy::DigitalTwinHybrid => vec![
            ("response_id", ValueDomain::Echo),
            ("predicted_content", ValueDomain::CategoricalLabel),
            ("predicted_design", ValueDomain::CategoricalLabel),
            ("predicted_coping", ValueDomain::CategoricalLabel),
            ("predicted_quitting", ValueDomain::CategoricalLabel),
            ("explanation", ValueDomain::FreeText),
        ],
    };
    OutputContract { keys }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_contract_includes_response_id_and_predictions() {
        for strategy in Strategy::ALL {
            for mode in [ProbMode::Continuous, ProbMode::PerCategory] {
                let contract = expected_output_contract(strategy, mode);
                assert!(contract.domain_of("response_id").is_some(), "{strategy}");
                for domain in ["content", "design", "coping", "quitting"] {
                    assert!(
                        contract.domain_of(&format!("predicted_{domain}")).is_some(),
                        "{strategy} missing predicted_{domain}"
                    );
                }
            }
        }
    }

    #[test]
    fn digital_twin_contract_keys() {
        let contract = expected_output_contract(Strategy::DigitalTwin, ProbMode::Continuous);
        let keys: Vec<&str> = contract.keys.iter().map(|(k, _)| *k).collect();
        assert_eq!(
            keys,
            vec![
                "response_id",
                "predicted_content",
                "predicted_design",
                "predicted_coping",
                "predicted_quitting",
                "explanation"
            ]
        );
    }

    #[test]
    fn prob_contract_is_continuous_with_confidences() {
        let contract = expected_output_contract(Strategy::ZeroShotProb, ProbMode::Continuous);
        assert_eq!(
            contract.domain_of("predicted_content"),
            Some(ValueDomain::ContinuousScore)
        );
        assert_eq!(
            contract.domain_of("confidence_quitting"),
            Some(ValueDomain::ContinuousScore)
        );
        let per_cat = expected_output_contract(Strategy::ZeroShotProb, ProbMode::PerCategory);
        assert_eq!(
            per_cat.domain_of("predicted_content"),
            Some(ValueDomain::CategoryLikelihoods)
        );
        assert_eq!(per_cat.domain_of("confidence_content"), None);
    }
}

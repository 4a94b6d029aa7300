//! Extraction of the JSON output contract from raw model text: find the
//! first balanced JSON object (code fences and surrounding prose are
//! ignored), read the predicted_* keys, normalize labels and continuous
//! scores to ordinals. Failures are data, never errors.

use serde_json::Value;

use super::{domain_index, ParseStatus};
use crate::model::{round_continuous, RatingDomain};
use crate::prompting::{expected_output_contract, ProbMode, Strategy, ValueDomain};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub ordinals: [Option<u8>; 4],
    pub continuous: [Option<f64>; 4],
    pub confidences: [Option<f64>; 4],
    pub status: ParseStatus,
    pub repairs: Vec<String>,
}

impl ParsedOutput {
    pub fn failed() -> Self {
        ParsedOutput {
            ordinals: [None; 4],
            continuous: [None; 4],
            confidences: [None; 4],
            status: ParseStatus::Failed,
            repairs: Vec::new(),
        }
    }
}

/// Yields `(start, end)` of balanced `{...}` slices, respecting strings.
fn balanced_objects(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            let mut j = i;
            while j < bytes.len() {
                let b = bytes[j];
                if in_string {
                    if escaped {
                        escaped = false;
                    } else if b == b'\\' {
                        escaped = true;
                    } else if b == b'"' {
                        in_string = false;
                    }
                } else {
                    match b {
                        b'"' => in_string = true,
                        b'{' => depth += 1,
                        b'}' => {
                            depth -= 1;
                            if depth == 0 {
                                spans.push((i, j + 1));
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                j += 1;
            }
            // skip past this opening brace whether or not it closed
            i += 1;
            if let Some(&(start, end)) = spans.last() {
                if start == i - 1 {
                    i = end;
                }
            }
        } else {
            i += 1;
        }
    }
    spans
}

fn first_parsable_object(text: &str) -> Option<Value> {
    for (start, end) in balanced_objects(text) {
        if let Ok(value @ Value::Object(_)) = serde_json::from_str::<Value>(&text[start..end]) {
            return Some(value);
        }
    }
    None
}

fn as_f64(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

/// Parses one raw response against a strategy's output contract.
///
/// Field handling follows the documented repair ladder: exact canonical
/// labels parse clean; case-folded labels, missing or out-of-range values
/// and response-id mismatches downgrade the record to `repaired`; a record
/// with no recoverable evaluable ordinal is `failed`.
pub fn parse_prediction(
    raw: &str,
    strategy: Strategy,
    prob_mode: ProbMode,
    expected_response_id: &str,
) -> ParsedOutput {
    let mut out = ParsedOutput::failed();
    let Some(object) = first_parsable_object(raw) else {
        return out;
    };
    let map = object.as_object().expect("object checked above");
    let contract = expected_output_contract(strategy, prob_mode);

    match map.get("response_id") {
        Some(Value::String(id)) if id == expected_response_id => {}
        Some(other) => out.repairs.push(format!(
            "response_id mismatch: expected {expected_response_id:?}, got {other}"
        )),
        None => out.repairs.push("missing response_id".to_string()),
    }

    for domain in RatingDomain::ALL {
        let key = format!("predicted_{}", domain.name());
        let idx = domain_index(domain);
        let value_domain = contract
            .domain_of(&key)
            .expect("every contract defines the four prediction keys");
        let Some(value) = map.get(&key) else {
            out.repairs.push(format!("missing {key}"));
            continue;
        };
        match value_domain {
            ValueDomain::CategoricalLabel => match value {
                Value::String(s) => match domain.scale().ordinal_of_str_relaxed(s) {
                    Ok((ordinal, folded)) => {
                        out.ordinals[idx] = Some(ordinal);
                        if folded {
                            out.repairs.push(format!("case-folded label for {key}: {s:?}"));
                        }
                    }
                    Err(_) => out.repairs.push(format!("unrecognized label for {key}: {s:?}")),
                },
                other => out.repairs.push(format!("non-string value for {key}: {other}")),
            },
            ValueDomain::ContinuousScore => match as_f64(value) {
                Some(x) if x.is_finite() => {
                    if !(1.0..=5.0).contains(&x) {
                        out.repairs.push(format!("out-of-range score for {key}: {x}"));
                    }
                    if !matches!(value, Value::Number(_)) {
                        out.repairs.push(format!("numeric string for {key}"));
                    }
                    out.continuous[idx] = Some(x);
                    out.ordinals[idx] = round_continuous(x).ok();
                }
                _ => out.repairs.push(format!("non-numeric value for {key}: {value}")),
            },
            ValueDomain::CategoryLikelihoods => match value {
                Value::Object(scores) => {
                    let labels = domain.scale().labels();
                    let mut best: Option<(usize, f64)> = None;
                    let mut any = false;
                    for (i, label) in labels.iter().enumerate() {
                        let score = scores.get(*label).and_then(as_f64);
                        if let Some(s) = score {
                            any = true;
                            // ties break toward the lower ordinal
                            if best.is_none_or(|(_, b)| s > b) {
                                best = Some((i, s));
                            }
                        }
                    }
                    if any {
                        out.ordinals[idx] = best.map(|(i, _)| i as u8 + 1);
                        if scores.len() != labels.len() {
                            out.repairs
                                .push(format!("partial likelihood table for {key}"));
                        }
                    } else {
                        out.repairs.push(format!("no canonical labels in {key} table"));
                    }
                }
                other => out.repairs.push(format!("non-object value for {key}: {other}")),
            },
            ValueDomain::Echo | ValueDomain::FreeText => unreachable!("prediction keys only"),
        }
        if value_domain == ValueDomain::ContinuousScore {
            let conf_key = format!("confidence_{}", domain.name());
            if contract.domain_of(&conf_key).is_some() {
                match map.get(&conf_key).and_then(as_f64) {
                    Some(c) => out.confidences[idx] = Some(c),
                    None => out.repairs.push(format!("missing {conf_key}")),
                }
            }
        }
    }

    let evaluable_recovered = RatingDomain::EVALUABLE
        .iter()
        .filter(|&&d| out.ordinals[domain_index(d)].is_some())
        .count();
    out.status = if evaluable_recovered == 0 {
        ParseStatus::Failed
    } else if out.repairs.is_empty() {
        ParseStatus::Ok
    } else {
        ParseStatus::Repaired
    };
    out
}

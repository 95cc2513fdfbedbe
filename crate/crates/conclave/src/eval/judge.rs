//! Rubric scoring of final designs by an LLM judge, and parsing of the
//! judge's reply into a scorecard.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// The five rubric metrics, in rubric order.
pub const JUDGE_METRICS: [&str; 5] = [
    "scalability",
    "reliability",
    "usability",
    "cost_effectiveness",
    "documentation",
];

pub const JUDGE_PROMPT: &str = "You are an expert in data pipeline design evaluation. Your task is to evaluate the following data pipeline design based on its description. For each of the specified metrics, assign a score from 1 to 10, where 1 is the lowest and 10 is the highest. Provide a brief justification for each score. Be critical and harsh if the design is poor and give it a low score. Base your evaluation solely on the provided description. Do not assume any additional information.

Metrics:

1. Scalability: Ability to handle increasing data volumes or user loads.

2. Reliability: Ability to handle failures and ensure data integrity.

3. Usability: Enough detail for developers to implement the design.

4. Cost-effectiveness: Balance between costs and benefits.

5. Documentation: How well-justified is the choice of elements for the data pipeline

Provide your evaluation in the following format in a json dict: {

[metric1]: {{score}: [score],

{justification}: [justification]},

[metric2]...

}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JudgeError {
    #[error("design text is empty")]
    EmptyDesign,
}

/// The fixed rubric prompt with the design appended after it, untouched.
pub fn render_judge_prompt(design_text: &str) -> Result<String, JudgeError> {
    if design_text.is_empty() {
        return Err(JudgeError::EmptyDesign);
    }
    Ok(format!("{JUDGE_PROMPT}\n\n{design_text}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricScore {
    pub score: u8,
    #[serde(default)]
    pub justification: String,
}

/// One judged design: a 1–10 score with justification per rubric metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScorecard {
    pub scalability: MetricScore,
    pub reliability: MetricScore,
    pub usability: MetricScore,
    pub cost_effectiveness: MetricScore,
    pub documentation: MetricScore,
}

impl JudgeScorecard {
    pub fn metrics(&self) -> [(&'static str, &MetricScore); 5] {
        [
            ("scalability", &self.scalability),
            ("reliability", &self.reliability),
            ("usability", &self.usability),
            ("cost_effectiveness", &self.cost_effectiveness),
            ("documentation", &self.documentation),
        ]
    }

    pub fn score(&self, metric: &str) -> Option<u8> {
        self.metrics()
            .iter()
            .find(|(name, _)| *name == metric)
            .map(|(_, m)| m.score)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScorecardParseError {
    #[error("no parseable JSON object in judge response: {0}")]
    Shape(String),
    #[error("missing metric '{0}'")]
    Missing(String),
    #[error("metric '{metric}' score out of range or not an integer: {detail}")]
    Range { metric: String, detail: String },
}

/// Extracts the first JSON object from `judge_response` and reads the five
/// rubric metrics out of it. Metric keys are matched case-insensitively with
/// spaces and hyphens treated as underscores. A metric may be either an
/// object carrying `score` (and optionally `justification`) or a bare
/// integer.
pub fn parse_scorecard(judge_response: &str) -> Result<JudgeScorecard, ScorecardParseError> {
    let object = first_json_object(judge_response)
        .ok_or_else(|| ScorecardParseError::Shape("no JSON object found".into()))?;
    let map = object
        .as_object()
        .ok_or_else(|| ScorecardParseError::Shape("top-level JSON is not an object".into()))?;

    let normalized: Vec<(String, &Value)> = map
        .iter()
        .map(|(k, v)| (normalize_key(k), v))
        .collect();

    let read_metric = |name: &str| -> Result<MetricScore, ScorecardParseError> {
        let value = normalized
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| ScorecardParseError::Missing(name.to_string()))?;
        metric_from_value(name, value)
    };

    Ok(JudgeScorecard {
        scalability: read_metric("scalability")?,
        reliability: read_metric("reliability")?,
        usability: read_metric("usability")?,
        cost_effectiveness: read_metric("cost_effectiveness")?,
        documentation: read_metric("documentation")?,
    })
}

fn metric_from_value(metric: &str, value: &Value) -> Result<MetricScore, ScorecardParseError> {
    match value {
        Value::Object(fields) => {
            let mut score = None;
            let mut justification = String::new();
            for (key, v) in fields {
                match normalize_key(key).as_str() {
                    "score" => score = Some(score_from_value(metric, v)?),
                    "justification" => {
                        if let Some(s) = v.as_str() {
                            justification = s.to_string();
                        }
                    }
                    _ => {}
                }
            }
            let score = score.ok_or_else(|| {
                ScorecardParseError::Missing(format!("{metric}/score"))
            })?;
            Ok(MetricScore {
                score,
                justification,
            })
        }
        other => Ok(MetricScore {
            score: score_from_value(metric, other)?,
            justification: String::new(),
        }),
    }
}

fn score_from_value(metric: &str, value: &Value) -> Result<u8, ScorecardParseError> {
    let range_err = |detail: String| ScorecardParseError::Range {
        metric: metric.to_string(),
        detail,
    };
    let score = match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i as f64
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.fract() != 0.0 {
                    return Err(range_err(format!("{f} is not an integer")));
                }
                f
            }
        }
        other => return Err(range_err(format!("expected integer, got {other}"))),
    };
    if !(1.0..=10.0).contains(&score) {
        return Err(range_err(format!("{score} outside [1, 10]")));
    }
    Ok(score as u8)
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            other => other.to_ascii_lowercase(),
        })
        .collect()
}

/// Finds the first balanced `{...}` span that parses as JSON. String literals
/// and escapes are honored while scanning for balance.
fn first_json_object(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(offset) = text[search_from..].find('{') {
        let start = search_from + offset;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(value) = serde_json::from_str::<Value>(&text[start..=end]) {
                return Some(value);
            }
        }
        search_from = start + 1;
    }
    None
}

fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rendered_prompt_keeps_instruction_text_and_appends_design() {
        let prompt = render_judge_prompt("my design").unwrap();
        assert!(prompt.contains("Be critical and harsh"));
        assert!(prompt.contains("expert in data pipeline design evaluation"));
        assert!(prompt.contains("in the following format in a json dict"));
        assert!(prompt.ends_with("my design"));
    }

    #[test]
    fn empty_design_is_rejected() {
        assert_eq!(render_judge_prompt("").unwrap_err(), JudgeError::EmptyDesign);
    }

    #[test]
    fn braces_in_design_pass_through_unescaped() {
        let design = r#"{"Platform": "AWS"}"#;
        let prompt = render_judge_prompt(design).unwrap();
        assert!(prompt.contains(design));
    }

    fn full_response() -> String {
        r#"Here is my evaluation.
{
  "Scalability": {"score": 8, "justification": "grows with shards"},
  "Reliability": {"score": 5, "justification": "single region"},
  "Usability": {"score": 4, "justification": "sketchy"},
  "Cost-effectiveness": {"score": 6, "justification": "sensible"},
  "Documentation": {"score": 4, "justification": "thin"}
}
Hope that helps."#
            .to_string()
    }

    #[test]
    fn parses_well_formed_five_metric_response() {
        let card = parse_scorecard(&full_response()).unwrap();
        assert_eq!(card.scalability.score, 8);
        assert_eq!(card.reliability.score, 5);
        assert_eq!(card.usability.score, 4);
        assert_eq!(card.cost_effectiveness.score, 6);
        assert_eq!(card.documentation.score, 4);
        assert_eq!(card.reliability.justification, "single region");
    }

    #[test]
    fn missing_metric_is_reported_by_name() {
        let response = r#"{
          "scalability": {"score": 8}, "reliability": {"score": 5},
          "usability": {"score": 4}, "cost_effectiveness": {"score": 6}
        }"#;
        assert_eq!(
            parse_scorecard(response).unwrap_err(),
            ScorecardParseError::Missing("documentation".into())
        );
    }

    #[test]
    fn out_of_range_score_is_a_range_error() {
        let mut response = full_response();
        response = response.replace(r#""score": 8"#, r#""score": 11"#);
        assert!(matches!(
            parse_scorecard(&response).unwrap_err(),
            ScorecardParseError::Range { metric, .. } if metric == "scalability"
        ));
    }

    #[test]
    fn fractional_score_is_a_range_error() {
        let mut response = full_response();
        response = response.replace(r#""score": 8"#, r#""score": 7.5"#);
        assert!(matches!(
            parse_scorecard(&response).unwrap_err(),
            ScorecardParseError::Range { .. }
        ));
    }

    #[test]
    fn no_json_object_is_a_shape_error() {
        assert!(matches!(
            parse_scorecard("I refuse to answer in JSON.").unwrap_err(),
            ScorecardParseError::Shape(_)
        ));
    }

    #[test]
    fn key_normalization_accepts_spaces_hyphens_and_case() {
        let response = r#"{
          "SCALABILITY": 8, "Reliability": 5, "usability": 4,
          "Cost Effectiveness": 6, "DOCUMENTATION": 4
        }"#;
        let card = parse_scorecard(response).unwrap();
        assert_eq!(card.cost_effectiveness.score, 6);
        assert_eq!(card.cost_effectiveness.justification, "");
    }

    #[test]
    fn first_object_wins_over_later_ones() {
        let response = format!("{}\n{{\"unrelated\": true}}", full_response());
        assert!(parse_scorecard(&response).is_ok());
    }

    #[test]
    fn unparseable_first_brace_falls_through_to_next_object() {
        let response = format!("{{broken json\n\n{}", full_response());
        // The broken span never balances, so scanning continues into the
        // real object nested after it.
        assert!(parse_scorecard(&response).is_ok());
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity_on_scores(
            scores in prop::array::uniform5(1u8..=10),
            text in "[a-zA-Z ]{0,30}",
        ) {
            let card = JudgeScorecard {
                scalability: MetricScore { score: scores[0], justification: text.clone() },
                reliability: MetricScore { score: scores[1], justification: text.clone() },
                usability: MetricScore { score: scores[2], justification: text.clone() },
                cost_effectiveness: MetricScore { score: scores[3], justification: text.clone() },
                documentation: MetricScore { score: scores[4], justification: text },
            };
            let rendered = serde_json::to_string_pretty(&card).unwrap();
            let parsed = parse_scorecard(&rendered).unwrap();
            prop_assert_eq!(parsed, card);
        }
    }
}

//! Validity verdicts for individual support relations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::graph::ArgumentAnalysis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Valid,
    Invalid,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strength::Valid => "valid",
            Strength::Invalid => "invalid",
        })
    }
}

/// Verdict on one relation, in the nested shape the validity prompt returns:
/// `{"claim", "evidence", "evaluation": {rationale, strength, ...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub claim: String,
    #[serde(deserialize_with = "evidence_list")]
    pub evidence: Vec<String>,
    pub evaluation: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub rationale: String,
    pub strength: Strength,
    pub rationale_short: String,
    pub requirements: String,
    pub label: String,
    pub label_long: String,
}

/// The model may answer `evidence` with one string or with a list.
fn evidence_list<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<String>, D::Error> {
    use serde::de::Error;
    match Value::deserialize(deserializer)? {
        Value::String(s) => Ok(vec![s]),
        Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(D::Error::custom(format!("evidence item {other} is not text"))),
            })
            .collect(),
        other => Err(D::Error::custom(format!("evidence {other} is not text"))),
    }
}

fn is_none_label(label: &str) -> bool {
    label.trim().eq_ignore_ascii_case("none")
}

impl Evaluation {
    pub fn strength(&self) -> Strength {
        self.evaluation.strength
    }

    pub fn is_valid(&self) -> bool {
        self.evaluation.strength == Strength::Valid
    }

    /// `valid` must come with label and label_long both `none`; `invalid`
    /// with neither. The rationale is mandatory.
    pub fn check_coherence(&self) -> Result<(), String> {
        let v = &self.evaluation;
        if v.rationale.trim().is_empty() {
            return Err("rationale must not be empty".into());
        }
        let label_none = is_none_label(&v.label);
        let long_none = is_none_label(&v.label_long);
        match v.strength {
            Strength::Valid if !label_none || !long_none => Err(format!(
                "strength is \"valid\" but label is {:?} and label_long is {:?}; both must be \"none\"",
                v.label, v.label_long
            )),
            Strength::Invalid if label_none || long_none => Err(
                "strength is \"invalid\" but label or label_long is \"none\"; name the flaw".into(),
            ),
            _ => Ok(()),
        }
    }
}

/// Graph plus one verdict per relation index. Relations whose evaluation
/// failed are listed in `failed` with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EvaluatedAnalysis {
    pub analysis: ArgumentAnalysis,
    pub evaluations: BTreeMap<usize, Evaluation>,
    #[serde(default)]
    pub failed: BTreeMap<usize, String>,
}

impl EvaluatedAnalysis {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty() && self.evaluations.len() == self.analysis.relations.len()
    }

    /// Indices of relations judged invalid, ascending.
    pub fn invalid_relations(&self) -> Vec<usize> {
        self.evaluations
            .iter()
            .filter(|(_, e)| !e.is_valid())
            .map(|(i, _)| *i)
            .collect()
    }

    /// Every relation is either evaluated or failed, never both.
    pub fn check_accounting(&self) -> Result<(), String> {
        let n = self.analysis.relations.len();
        if self.evaluations.len() + self.failed.len() != n {
            return Err(format!(
                "{} evaluations + {} failures != {} relations",
                self.evaluations.len(),
                self.failed.len(),
                n
            ));
        }
        for i in self.evaluations.keys().chain(self.failed.keys()) {
            if *i >= n {
                return Err(format!("relation index {i} out of range"));
            }
        }
        if self.evaluations.keys().any(|i| self.failed.contains_key(i)) {
            return Err("relation both evaluated and failed".into());
        }
        Ok(())
    }

    /// Relations and their verdicts in the flat form shown to the planning
    /// and dialogue prompts.
    pub fn to_prompt_value(&self) -> Value {
        let relations: Vec<Value> = self
            .analysis
            .relations
            .iter()
            .enumerate()
            .map(|(i, rel)| {
                let mut entry = serde_json::json!({
                    "relation": rel,
                    "target": self.analysis.quote_text(rel.target),
                    "sources": rel.sources.iter().map(|s| self.analysis.quote_text(*s)).collect::<Vec<_>>(),
                });
                if let Some(eval) = self.evaluations.get(&i) {
                    entry["evaluation"] = serde_json::to_value(&eval.evaluation).expect("plain data");
                }
                entry
            })
            .collect();
        let mut value = self.analysis.to_value();
        value["evaluations"] = Value::Array(relations);
        value
    }
}

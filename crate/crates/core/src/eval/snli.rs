//! Premise/hypothesis pairs in the SNLI jsonl layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::Strength;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    /// Validity verdict a label corresponds to; neutral has none.
    pub fn expected_strength(self) -> Option<Strength> {
        match self {
            NliLabel::Entailment => Some(Strength::Valid),
            NliLabel::Contradiction => Some(Strength::Invalid),
            NliLabel::Neutral => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPair {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: NliLabel,
}

impl NliPair {
    /// Two-sentence essay with the hypothesis as the conclusion.
    pub fn mini_essay(&self) -> String {
        let premise = self.premise.trim().trim_end_matches(['.', '!', '?']);
        let hypothesis = self.hypothesis.trim();
        let mut essay = format!("{premise}. Therefore, {hypothesis}");
        if !hypothesis.ends_with(['.', '!', '?']) {
            essay.push('.');
        }
        essay
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SnliSet {
    pub pairs: Vec<NliPair>,
    /// Records without a consensus label.
    pub skipped: usize,
}

#[derive(Debug, Error)]
pub enum SnliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Deserialize)]
struct Record {
    #[serde(alias = "premise")]
    sentence1: String,
    #[serde(alias = "hypothesis")]
    sentence2: String,
    #[serde(alias = "label")]
    gold_label: String,
    #[serde(default, rename = "pairID")]
    pair_id: Option<String>,
}

pub fn parse_snli(text: &str) -> Result<SnliSet, SnliError> {
    let mut set = SnliSet::default();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| SnliError::Parse {
            line: index + 1,
            message,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let gold_label = match record.gold_label.as_str() {
            "entailment" => NliLabel::Entailment,
            "contradiction" => NliLabel::Contradiction,
            "neutral" => NliLabel::Neutral,
            "-" | "" => {
                set.skipped += 1;
                continue;
            }
            other => return Err(parse_err(format!("unknown label {other:?}"))),
        };
        set.pairs.push(NliPair {
            id: record.pair_id.unwrap_or_else(|| format!("line{}", index + 1)),
            premise: record.sentence1,
            hypothesis: record.sentence2,
            gold_label,
        });
    }
    Ok(set)
}

pub fn load_snli(path: &Path) -> Result<SnliSet, SnliError> {
    let text = std::fs::read_to_string(path).map_err(|source| SnliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_snli(&text)
}

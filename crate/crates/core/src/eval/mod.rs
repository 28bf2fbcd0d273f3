//! Offline evaluation against annotated essays and NLI pairs.

pub mod aae;
pub mod metrics;
pub mod snli;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluation::Strength;
use crate::gateway::ModelConfig;
use crate::graph::QuoteId;
use crate::pipeline::{Pipeline, PipelineSettings};

pub use aae::{load_aae_corpus, parse_annotations, AaeError, ComponentKind, GoldEssay, RelationKind};
pub use metrics::{latency_stats, main_claim_accuracy, match_components, relation_overlap, validity_accuracy};
pub use snli::{load_snli, parse_snli, NliLabel, NliPair, SnliError, SnliSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("sample of {n} requested from {available} items")]
    SampleTooLarge { n: usize, available: usize },
    #[error("sample size must be positive")]
    EmptySample,
    #[error("every item failed ({0} failures)")]
    AllFailed(usize),
}

/// `n` distinct items drawn uniformly, reproducible for a given seed.
pub fn sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, EvalError> {
    if n > items.len() {
        return Err(EvalError::SampleTooLarge {
            n,
            available: items.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, items.len(), n)
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Structure,
    Validity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub latency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_claim_match: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<metrics::OverlapScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Strength>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<NliLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub kind: EvalKind,
    pub model_config: ModelConfig,
    pub config_fingerprint: String,
    pub settings: PipelineSettings,
    pub source: String,
    pub sample_size: usize,
    pub seed: u64,
    pub failures: Vec<ItemFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_claim_accuracy: Option<f64>,
    /// Mean recall of gold support edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_accuracy: Option<f64>,
    /// Neutral pairs left out of the validity pool before sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_neutral: Option<usize>,
    pub latency_mean: f64,
    pub latency_stddev: f64,
    /// How ambiguous parts of the scoring were resolved.
    pub method: Vec<String>,
    pub per_item: Vec<ItemRecord>,
}

impl MetricsReport {
    /// Report without run id, timestamps or timings: equal for equal
    /// inputs and model replies.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("plain data");
        if let Value::Object(map) = &mut value {
            for key in ["run_id", "created_at", "latency_mean", "latency_stddev"] {
                map.remove(key);
            }
            if let Some(Value::Array(items)) = map.get_mut("per_item") {
                for item in items {
                    if let Value::Object(item) = item {
                        item.remove("latency");
                    }
                }
            }
        }
        serde_json::to_string_pretty(&value).expect("plain data")
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("kind".into(), format!("{:?}", self.kind).to_lowercase()),
            ("model".into(), format!("{} ({})", self.model_config.model_name, self.model_config.provider)),
            ("source".into(), self.source.clone()),
            ("sample size".into(), self.sample_size.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("scored items".into(), self.per_item.len().to_string()),
            ("failures".into(), self.failures.len().to_string()),
        ];
        let pct = |v: f64| format!("{:.1}%", v * 100.0);
        if let Some(v) = self.main_claim_accuracy {
            rows.push(("main-claim accuracy".into(), pct(v)));
        }
        if let Some(v) = self.relation_overlap {
            rows.push(("relation overlap".into(), pct(v)));
        }
        if let (Some(p), Some(f)) = (self.relation_precision, self.relation_f1) {
            rows.push(("relation precision / F1".into(), format!("{} / {}", pct(p), pct(f))));
        }
        if let Some(v) = self.validity_accuracy {
            rows.push(("validity accuracy".into(), pct(v)));
        }
        if let Some(v) = self.excluded_neutral {
            rows.push(("neutral pairs excluded".into(), v.to_string()));
        }
        rows.push(("latency mean".into(), format!("{:.2}s", self.latency_mean)));
        rows.push(("latency sd".into(), format!("{:.2}s", self.latency_stddev)));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }

    /// Broken invariants, empty when the report is sound.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let ratios = [
            self.main_claim_accuracy,
            self.relation_overlap,
            self.relation_precision,
            self.relation_f1,
            self.validity_accuracy,
        ];
        if ratios.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            problems.push("ratio outside [0, 1]".to_string());
        }
        if self.latency_stddev < 0.0 {
            problems.push("negative standard deviation".to_string());
        }
        if self.per_item.len() + self.failures.len() != self.sample_size {
            problems.push("items and failures do not add up to the sample size".to_string());
        }
        problems
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn report_base(pipeline: &Pipeline, kind: EvalKind, source: &str, n: usize, seed: u64) -> MetricsReport {
    MetricsReport {
        run_id: uuid::Uuid::new_v4().to_string(),
        created_at: Utc::now(),
        kind,
        model_config: pipeline.config().clone(),
        config_fingerprint: pipeline.config().fingerprint(),
        settings: *pipeline.settings(),
        source: source.to_string(),
        sample_size: n,
        seed,
        failures: Vec::new(),
        main_claim_accuracy: None,
        relation_overlap: None,
        relation_precision: None,
        relation_f1: None,
        validity_accuracy: None,
        excluded_neutral: None,
        latency_mean: 0.0,
        latency_stddev: 0.0,
        method: Vec::new(),
        per_item: Vec::new(),
    }
}

fn finish(mut report: MetricsReport) -> Result<MetricsReport, EvalError> {
    if report.per_item.is_empty() {
        return Err(EvalError::AllFailed(report.failures.len()));
    }
    let latencies: Vec<f64> = report.per_item.iter().map(|i| i.latency).collect();
    let (m, sd) = latency_stats(&latencies).expect("at least one item");
    report.latency_mean = m;
    report.latency_stddev = sd;
    Ok(report)
}

/// Structure extraction on `n` sampled essays.
pub async fn run_structure_eval(
    pipeline: &Pipeline,
    corpus: &[GoldEssay],
    n: usize,
    seed: u64,
    source: &str,
) -> Result<MetricsReport, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptySample);
    }
    let chosen = sample(corpus, n, seed)?;
    let mut outcomes: Vec<_> = stream::iter(chosen.iter().enumerate().map(|(i, essay)| async move {
        (i, pipeline.extract_structure(&essay.text).await)
    }))
    .buffer_unordered(pipeline.settings().concurrency.max(1))
    .collect()
    .await;
    outcomes.sort_by_key(|(i, _)| *i);

    let mut report = report_base(pipeline, EvalKind::Structure, source, n, seed);
    report.method = vec![
        "sampling unit: essay".into(),
        format!("component match: intersection over union >= {}", metrics::MATCH_IOU),
        "main claim: matched component is a MajorClaim".into(),
        "relation overlap: recall of gold supports edges, joined sources expanded, MajorClaims merged".into(),
        "latency: full structure stage wall-clock, population standard deviation".into(),
    ];
    let mut claims = Vec::new();
    let mut scores = Vec::new();
    for (i, outcome) in outcomes {
        let gold = &chosen[i];
        match outcome {
            Ok(structure) => {
                let claim = structure.anchors.get(&QuoteId::CLAIM).copied();
                let score = relation_overlap(&structure.analysis, &structure.anchors, gold);
                report.per_item.push(ItemRecord {
                    item_id: gold.essay_id.clone(),
                    latency: structure.latency,
                    main_claim_match: Some(metrics::claim_matches(claim.as_ref(), gold)),
                    overlap: Some(score),
                    predicted: None,
                    gold: None,
                    warnings: structure.warnings,
                });
                claims.push((claim, gold));
                scores.push(score);
            }
            Err(err) => report.failures.push(ItemFailure {
                item_id: gold.essay_id.clone(),
                error: err.to_string(),
            }),
        }
    }
    report.main_claim_accuracy = Some(main_claim_accuracy(&claims));
    report.relation_overlap = Some(mean(scores.iter().map(|s| s.recall)));
    report.relation_precision = Some(mean(scores.iter().map(|s| s.precision)));
    report.relation_f1 = Some(mean(scores.iter().map(|s| s.f1)));
    finish(report)
}

/// Validity checking on `n` sampled non-neutral pairs.
pub async fn run_validity_eval(
    pipeline: &Pipeline,
    pairs: &[NliPair],
    n: usize,
    seed: u64,
    source: &str,
) -> Result<MetricsReport, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptySample);
    }
    let (usable, neutral): (Vec<NliPair>, Vec<NliPair>) = pairs
        .iter()
        .cloned()
        .partition(|p| p.gold_label != NliLabel::Neutral);
    let chosen = sample(&usable, n, seed)?;
    let mut outcomes: Vec<_> = stream::iter(chosen.iter().enumerate().map(|(i, pair)| async move {
        let essay = pair.mini_essay();
        (i, pipeline.evaluate_relation(&essay, &pair.hypothesis, &[&pair.premise]).await)
    }))
    .buffer_unordered(pipeline.settings().concurrency.max(1))
    .collect()
    .await;
    outcomes.sort_by_key(|(i, _)| *i);

    let mut report = report_base(pipeline, EvalKind::Validity, source, n, seed);
    report.excluded_neutral = Some(neutral.len());
    report.method = vec![
        "sampling unit: premise/hypothesis pair".into(),
        "entailment = valid, contradiction = invalid, neutral excluded before sampling".into(),
        "essay: \"<premise>. Therefore, <hypothesis>.\" with the hypothesis as the claim".into(),
        "latency: one validity call including any corrective retry, population standard deviation".into(),
    ];
    let mut verdicts = Vec::new();
    for (i, outcome) in outcomes {
        let pair = &chosen[i];
        match outcome {
            Ok(verdict) => {
                let strength = verdict.evaluation.strength();
                verdicts.push((strength, pair.gold_label));
                report.per_item.push(ItemRecord {
                    item_id: pair.id.clone(),
                    latency: verdict.latency,
                    main_claim_match: None,
                    overlap: None,
                    predicted: Some(strength),
                    gold: Some(pair.gold_label),
                    warnings: verdict.warnings,
                });
            }
            Err(err) => report.failures.push(ItemFailure {
                item_id: pair.id.clone(),
                error: err.to_string(),
            }),
        }
    }
    report.validity_accuracy = Some(validity_accuracy(&verdicts));
    finish(report)
}

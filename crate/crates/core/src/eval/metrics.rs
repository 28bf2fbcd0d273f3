//! Scores comparing model output with gold annotations. All pure.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::aae::{ComponentKind, GoldEssay};
use super::snli::NliLabel;
use crate::anchor::AnchoredSpan;
use crate::evaluation::Strength;
use crate::graph::{ArgumentAnalysis, QuoteId};

/// A predicted span is matched when intersection over union reaches this.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no latency samples")]
    EmptyInput,
    #[error("latency sample {0} is not finite")]
    NonFinite(f64),
}

/// Intersection and union lengths of two half-open spans.
pub fn overlap_counts(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    (inter, union)
}

pub fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    match overlap_counts(a, b) {
        (_, 0) => 0.0,
        (inter, union) => inter as f64 / union as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub component_id: String,
    pub ratio: f64,
}

/// Best gold component for one span: highest IoU, earliest component on
/// ties, none below [`MATCH_IOU`].
pub fn best_component(span: (usize, usize), gold: &GoldEssay) -> Option<ComponentMatch> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (index, component) in gold.components.iter().enumerate() {
        let (inter, union) = overlap_counts(span, (component.start, component.end));
        if union == 0 || 2 * inter < union {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bi, bu)) => inter * bu > bi * union,
        };
        if better {
            best = Some((index, inter, union));
        }
    }
    best.map(|(index, inter, union)| ComponentMatch {
        component_id: gold.components[index].id.clone(),
        ratio: inter as f64 / union as f64,
    })
}

pub fn match_components(
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    gold: &GoldEssay,
) -> BTreeMap<QuoteId, Option<ComponentMatch>> {
    anchors
        .iter()
        .map(|(id, span)| (*id, best_component((span.start, span.end), gold)))
        .collect()
}

/// Whether a predicted main-claim span matches a gold major claim.
pub fn claim_matches(claim: Option<&AnchoredSpan>, gold: &GoldEssay) -> bool {
    claim
        .and_then(|span| best_component((span.start, span.end), gold))
        .and_then(|m| gold.component(&m.component_id))
        .is_some_and(|c| c.kind == ComponentKind::MajorClaim)
}

/// Share of essays whose predicted main claim matches a major claim.
pub fn main_claim_accuracy(runs: &[(Option<AnchoredSpan>, &GoldEssay)]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    let hits = runs
        .iter()
        .filter(|(claim, gold)| claim_matches(claim.as_ref(), gold))
        .count();
    hits as f64 / runs.len() as f64
}

/// Graph node after mapping onto the gold annotation. All major claims
/// collapse into the main-claim node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeNode {
    MainClaim,
    Component(String),
}

pub type Edge = (EdgeNode, EdgeNode);

fn gold_node(gold: &GoldEssay, id: &str) -> Option<EdgeNode> {
    let component = gold.component(id)?;
    Some(match component.kind {
        ComponentKind::MajorClaim => EdgeNode::MainClaim,
        _ => EdgeNode::Component(id.to_string()),
    })
}

/// Gold `supports` edges; `attacks` are not part of the reference.
pub fn gold_edges(gold: &GoldEssay) -> BTreeSet<Edge> {
    gold.supports()
        .filter_map(|r| Some((gold_node(gold, &r.source)?, gold_node(gold, &r.target)?)))
        .collect()
}

/// Predicted relations mapped onto gold components, one edge per source.
pub fn predicted_edges(
    analysis: &ArgumentAnalysis,
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    gold: &GoldEssay,
) -> BTreeSet<Edge> {
    let matches = match_components(anchors, gold);
    let node = |id: QuoteId| -> Option<EdgeNode> {
        if id.is_claim() {
            return Some(EdgeNode::MainClaim);
        }
        let m = matches.get(&id)?.as_ref()?;
        gold_node(gold, &m.component_id)
    };
    let mut edges = BTreeSet::new();
    for relation in &analysis.relations {
        let Some(target) = node(relation.target) else {
            continue;
        };
        for source in &relation.sources {
            if let Some(source) = node(*source) {
                edges.insert((source, target.clone()));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapScore {
    /// Share of gold edges that were predicted. This is the reported overlap.
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hits: usize,
    pub predicted: usize,
    pub gold: usize,
}

pub fn score_edges(predicted: &BTreeSet<Edge>, gold: &BTreeSet<Edge>) -> OverlapScore {
    let hits = predicted.intersection(gold).count();
    let recall = if gold.is_empty() { 1.0 } else { hits as f64 / gold.len() as f64 };
    let precision = match (predicted.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hits as f64 / predicted.len() as f64,
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    OverlapScore {
        recall,
        precision,
        f1,
        hits,
        predicted: predicted.len(),
        gold: gold.len(),
    }
}

pub fn relation_overlap(
    analysis: &ArgumentAnalysis,
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    gold: &GoldEssay,
) -> OverlapScore {
    score_edges(&predicted_edges(analysis, anchors, gold), &gold_edges(gold))
}

/// Agreement between verdicts and gold labels; neutral pairs do not count.
pub fn validity_accuracy(verdicts: &[(Strength, NliLabel)]) -> f64 {
    let scored: Vec<bool> = verdicts
        .iter()
        .filter_map(|(strength, label)| label.expected_strength().map(|s| s == *strength))
        .collect();
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().filter(|ok| **ok).count() as f64 / scored.len() as f64
}

/// Mean and population standard deviation, each rounded once from the
/// exact value.
pub fn latency_stats(samples: &[f64]) -> Result<(f64, f64), MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let exact = samples
        .iter()
        .map(|x| BigRational::from_float(*x).ok_or(MetricError::NonFinite(*x)))
        .collect::<Result<Vec<_>, _>>()?;
    let n = BigRational::from_integer(BigInt::from(exact.len()));
    let mean = exact.iter().fold(BigRational::zero(), |acc, x| acc + x) / &n;
    let variance = exact
        .iter()
        .map(|x| {
            let d = x - &mean;
            &d * &d
        })
        .fold(BigRational::zero(), |acc, x| acc + x)
        / &n;
    let to_f64 = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
    Ok((to_f64(&mean), to_f64(&variance).sqrt()))
}

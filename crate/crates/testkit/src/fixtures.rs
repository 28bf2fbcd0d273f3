use std::collections::BTreeMap;

use inker_core::anchor::{AnchoredSpan, MatchKind};
use inker_core::eval::aae::{GoldComponent, GoldRelation};
use inker_core::eval::{ComponentKind, GoldEssay, RelationKind};
use inker_core::graph::{ArgumentAnalysis, QuoteId, SupportRelation};
use rand::seq::IndexedRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "the", "city", "should", "ban", "cars", "because", "air", "is", "cleaner", "when", "streets",
    "are", "quiet", "and", "people", "walk", "more", "often", "café", "naïve", "schools", "teach",
    "children", "every", "day", "so", "that", "they", "learn", "to", "think", "clearly", "about",
    "evidence", "reasons", "claims", "über", "progress", "money", "time",
];

/// Random essay of about `words` words.
pub fn essay<R: Rng>(rng: &mut R, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push(if rng.random_ratio(1, 8) { '.' } else { ' ' });
            if out.ends_with('.') {
                out.push(' ');
            }
        }
        out.push_str(WORDS.choose(rng).expect("non-empty word list"));
    }
    out.push('.');
    out
}

/// A random substring of `text` of `min..=max` characters, as (start, end).
pub fn substring_span<R: Rng>(rng: &mut R, text: &str, min: usize, max: usize) -> (usize, usize) {
    let n = text.chars().count();
    let len = rng.random_range(min..=max.min(n));
    let start = rng.random_range(0..=n - len);
    (start, start + len)
}

pub fn slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}

/// Applies `edits` random single-character insertions, deletions or
/// substitutions.
pub fn perturb<R: Rng>(rng: &mut R, text: &str, edits: usize) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzé ".chars().collect();
    for _ in 0..edits {
        let pick = *alphabet.choose(rng).expect("non-empty alphabet");
        match rng.random_range(0..3) {
            0 => {
                let at = rng.random_range(0..=chars.len());
                chars.insert(at, pick);
            }
            1 if chars.len() > 1 => {
                let at = rng.random_range(0..chars.len());
                chars.remove(at);
            }
            _ => {
                let at = rng.random_range(0..chars.len());
                chars[at] = pick;
            }
        }
    }
    chars.into_iter().collect()
}

fn kind<R: Rng>(rng: &mut R) -> ComponentKind {
    *[ComponentKind::MajorClaim, ComponentKind::Claim, ComponentKind::Premise]
        .choose(rng)
        .expect("non-empty")
}

/// Gold essay over a 100-character text with up to 6 components and 6
/// relations. Spans may overlap.
pub fn gold<R: Rng>(rng: &mut R) -> GoldEssay {
    let text = "x".repeat(100);
    let count = rng.random_range(1..=6);
    let components: Vec<GoldComponent> = (0..count)
        .map(|i| {
            let start = rng.random_range(0..90);
            let end = rng.random_range(start + 1..=(start + 20).min(100));
            GoldComponent {
                id: format!("T{}", i + 1),
                kind: kind(rng),
                start,
                end,
                text: text[start..end].to_string(),
            }
        })
        .collect();
    let relations = (0..rng.random_range(0..=6))
        .map(|i| GoldRelation {
            id: format!("R{}", i + 1),
            source: components.choose(rng).expect("non-empty").id.clone(),
            relation: if rng.random_ratio(3, 4) { RelationKind::Supports } else { RelationKind::Attacks },
            target: components.choose(rng).expect("non-empty").id.clone(),
        })
        .collect();
    GoldEssay {
        essay_id: "generated".into(),
        text,
        components,
        relations,
        attributes: Vec::new(),
    }
}

fn span(id: u32, start: usize, end: usize) -> AnchoredSpan {
    AnchoredSpan {
        quote_id: QuoteId(id),
        start,
        end,
        match_kind: MatchKind::Exact,
        similarity: 1.0,
    }
}

/// A prediction for `gold`: spans copy, jitter or miss gold components;
/// relations are random over the predicted ids, joined groups included.
pub fn prediction<R: Rng>(rng: &mut R, gold: &GoldEssay) -> (ArgumentAnalysis, BTreeMap<QuoteId, AnchoredSpan>) {
    let count = rng.random_range(1..=6u32);
    let mut anchors = BTreeMap::new();
    let mut quotes = BTreeMap::new();
    for id in 0..count {
        let (start, end) = match rng.random_range(0..3) {
            0 => {
                let c = gold.components.choose(rng).expect("non-empty");
                (c.start, c.end)
            }
            1 => {
                let c = gold.components.choose(rng).expect("non-empty");
                let start = c.start.saturating_sub(rng.random_range(0..4));
                let end = (c.end + rng.random_range(0..4)).min(100).max(start + 1);
                (start, end)
            }
            _ => {
                let start = rng.random_range(0..95);
                (start, rng.random_range(start + 1..=100))
            }
        };
        anchors.insert(QuoteId(id), span(id, start, end));
        if id > 0 {
            quotes.insert(QuoteId(id), format!("q{id}"));
        }
    }
    let relations = (0..rng.random_range(0..=6))
        .map(|_| {
            let target = rng.random_range(0..count);
            let width = rng.random_range(1..=2);
            let sources: Vec<u32> = (0..width).map(|_| rng.random_range(1..count.max(2))).collect();
            SupportRelation::joined(&sources, target)
        })
        .collect();
    let analysis = ArgumentAnalysis {
        claim_content: "claim".into(),
        claim_quote: "q0".into(),
        quotes,
        relations,
    };
    (analysis, anchors)
}

use std::collections::BTreeMap;

use inker_core::anchor::AnchoredSpan;
use inker_core::eval::{ComponentKind, GoldEssay, NliLabel, RelationKind};
use inker_core::evaluation::Strength;
use inker_core::graph::{ArgumentAnalysis, QuoteId};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Levenshtein distance with the full table.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub distance: usize,
    pub exact: bool,
}

impl Window {
    pub fn similarity(&self, quote_len: usize) -> f64 {
        let longest = quote_len.max(self.end - self.start);
        1.0 - self.distance as f64 / longest as f64
    }
}

/// Leftmost verbatim occurrence, else the best window of any start whose
/// length is within a quarter of the quote length. Windows are ranked by
/// distance over the longer length, then start, then length. Returns the
/// winner only if it reaches `threshold`.
pub fn anchor(essay: &str, quote: &str, threshold: f64) -> Option<Window> {
    let text: Vec<char> = essay.chars().collect();
    let q: Vec<char> = quote.chars().collect();
    let m = q.len();
    if m == 0 {
        return None;
    }
    for start in 0..text.len() {
        if start + m <= text.len() && text[start..start + m] == q[..] {
            return Some(Window { start, end: start + m, distance: 0, exact: true });
        }
    }
    let shortest = (3 * m).div_ceil(4).max(1);
    let longest = 5 * m / 4;
    let mut best: Option<(Window, usize)> = None;
    for start in 0..text.len() {
        for len in shortest..=longest {
            if start + len > text.len() {
                break;
            }
            let d = edit_distance(&q, &text[start..start + len]);
            let norm = m.max(len);
            let w = Window { start, end: start + len, distance: d, exact: false };
            let better = match best {
                None => true,
                Some((b, bn)) => {
                    let (l, r) = (d * bn, b.distance * norm);
                    l < r || (l == r && (start, len) < (b.start, b.end - b.start))
                }
            };
            if better {
                best = Some((w, norm));
            }
        }
    }
    best.map(|(w, _)| w).filter(|w| w.similarity(m) >= threshold)
}

/// (intersection, union) by counting positions.
pub fn overlap_by_positions(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let hi = a.1.max(b.1);
    let mut inter = 0;
    let mut union = 0;
    for p in 0..hi {
        let in_a = a.0 <= p && p < a.1;
        let in_b = b.0 <= p && p < b.1;
        inter += usize::from(in_a && in_b);
        union += usize::from(in_a || in_b);
    }
    (inter, union)
}

/// Component id with the largest overlap ratio of at least one half.
pub fn match_span(span: (usize, usize), gold: &GoldEssay) -> Option<String> {
    let scored: Vec<(usize, usize, usize)> = gold
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (inter, union) = overlap_by_positions(span, (c.start, c.end));
            (i, inter, union)
        })
        .filter(|(_, inter, union)| *union > 0 && 2 * inter >= *union)
        .collect();
    let top = scored.iter().map(|(_, i, u)| BigRational::new(BigInt::from(*i), BigInt::from(*u))).max()?;
    scored
        .iter()
        .find(|(_, i, u)| BigRational::new(BigInt::from(*i), BigInt::from(*u)) == top)
        .map(|(idx, _, _)| gold.components[*idx].id.clone())
}

fn node(gold: &GoldEssay, id: &str) -> Option<String> {
    let c = gold.components.iter().find(|c| c.id == id)?;
    Some(if c.kind == ComponentKind::MajorClaim { "<main>".to_string() } else { c.id.clone() })
}

pub fn gold_edges(gold: &GoldEssay) -> Vec<(String, String)> {
    let mut edges = Vec::new();
    for r in &gold.relations {
        if r.relation != RelationKind::Supports {
            continue;
        }
        if let (Some(s), Some(t)) = (node(gold, &r.source), node(gold, &r.target)) {
            if !edges.contains(&(s.clone(), t.clone())) {
                edges.push((s, t));
            }
        }
    }
    edges
}

pub fn predicted_edges(
    analysis: &ArgumentAnalysis,
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    gold: &GoldEssay,
) -> Vec<(String, String)> {
    let map = |id: QuoteId| -> Option<String> {
        if id.0 == 0 {
            return Some("<main>".to_string());
        }
        let span = anchors.get(&id)?;
        node(gold, &match_span((span.start, span.end), gold)?)
    };
    let mut edges = Vec::new();
    for r in &analysis.relations {
        for s in &r.sources {
            if let (Some(s), Some(t)) = (map(*s), map(r.target)) {
                if !edges.contains(&(s.clone(), t.clone())) {
                    edges.push((s, t));
                }
            }
        }
    }
    edges
}

/// Recall of gold support edges.
pub fn relation_overlap(
    analysis: &ArgumentAnalysis,
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    gold: &GoldEssay,
) -> f64 {
    let gold_set = gold_edges(gold);
    if gold_set.is_empty() {
        return 1.0;
    }
    let pred = predicted_edges(analysis, anchors, gold);
    let hits = gold_set.iter().filter(|e| pred.contains(e)).count();
    hits as f64 / gold_set.len() as f64
}

pub fn main_claim_accuracy(runs: &[(Option<AnchoredSpan>, &GoldEssay)]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for (claim, gold) in runs {
        let Some(span) = claim else { continue };
        let Some(id) = match_span((span.start, span.end), gold) else { continue };
        if gold.components.iter().any(|c| c.id == id && c.kind == ComponentKind::MajorClaim) {
            hits += 1;
        }
    }
    hits as f64 / runs.len() as f64
}

pub fn validity_accuracy(verdicts: &[(Strength, NliLabel)]) -> f64 {
    let mut right = 0;
    let mut total = 0;
    for (s, g) in verdicts {
        match (s, g) {
            (_, NliLabel::Neutral) => {}
            (Strength::Valid, NliLabel::Entailment) | (Strength::Invalid, NliLabel::Contradiction) => {
                right += 1;
                total += 1;
            }
            _ => total += 1,
        }
    }
    if total == 0 {
        0.0
    } else {
        right as f64 / total as f64
    }
}

/// Mean and population standard deviation via sums of powers, exactly.
pub fn latency_stats(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let xs: Vec<BigRational> = samples.iter().map(|x| BigRational::from_float(*x)).collect::<Option<_>>()?;
    let n = BigRational::from_integer(BigInt::from(xs.len()));
    let s1 = xs.iter().fold(BigRational::zero(), |a, x| a + x);
    let s2 = xs.iter().fold(BigRational::zero(), |a, x| a + x * x);
    let mean = &s1 / &n;
    let variance = (&n * &s2 - &s1 * &s1) / (&n * &n);
    Some((mean.to_f64()?, variance.to_f64()?.sqrt()))
}

/// Whether the support graph has a directed cycle, by trying every path.
pub fn has_cycle(analysis: &ArgumentAnalysis) -> bool {
    let edges: Vec<(u32, u32)> = analysis
        .relations
        .iter()
        .flat_map(|r| r.sources.iter().map(move |s| (s.0, r.target.0)))
        .collect();
    fn walk(edges: &[(u32, u32)], path: &mut Vec<u32>) -> bool {
        let last = *path.last().expect("non-empty path");
        for (s, t) in edges {
            if *s != last {
                continue;
            }
            if path.contains(t) {
                return true;
            }
            path.push(*t);
            if walk(edges, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut starts: Vec<u32> = edges.iter().map(|(s, _)| *s).collect();
    starts.dedup();
    starts.into_iter().any(|s| walk(&edges, &mut vec![s]))
}

//! Locating model-returned quotes inside the essay.
//!
//! Models are unreliable at reporting character offsets and sometimes drift
//! by a character or two when quoting, so every quote is matched back onto
//! the essay text: verbatim first, then by bounded approximate matching.
//!
//! All offsets count Unicode scalar values, not bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArgumentAnalysis, QuoteId};

pub const DEFAULT_THRESHOLD: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Fuzzy,
}

/// Where a quote was found, independent of which quote it was.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextMatch {
    pub start: usize,
    pub end: usize,
    pub match_kind: MatchKind,
    pub similarity: f64,
}

impl TextMatch {
    pub fn for_quote(self, quote_id: QuoteId) -> AnchoredSpan {
        AnchoredSpan {
            quote_id,
            start: self.start,
            end: self.end,
            match_kind: self.match_kind,
            similarity: self.similarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredSpan {
    pub quote_id: QuoteId,
    pub start: usize,
    pub end: usize,
    pub match_kind: MatchKind,
    pub similarity: f64,
}

impl AnchoredSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &AnchoredSpan) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    pub fn overlaps(&self, other: &AnchoredSpan) -> bool {
        self.overlap(other) > 0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnchorError {
    #[error("cannot anchor an empty quote")]
    EmptyQuote,
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("quote not found (best similarity {best:.3} below threshold {threshold:.3})")]
    NoAnchor { best: f64, threshold: f64 },
}

/// Levenshtein distance over chars, two-row DP.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, cb) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, ca) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ca != cb);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// `1 - distance / max(len)`.
pub fn similarity(distance: usize, quote_len: usize, window_len: usize) -> f64 {
    let longest = quote_len.max(window_len);
    if longest == 0 {
        return 1.0;
    }
    1.0 - distance as f64 / longest as f64
}

/// Essay text prepared for repeated anchoring.
#[derive(Debug, Clone)]
pub struct EssayText<'a> {
    text: &'a str,
    chars: Vec<char>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    start: usize,
    len: usize,
    distance: usize,
    norm: usize,
}

impl Candidate {
    /// Whether `self` ranks before `other`: lower normalized distance, then
    /// leftmost start, then shorter span.
    fn beats(&self, other: &Candidate) -> bool {
        let lhs = self.distance * other.norm;
        let rhs = other.distance * self.norm;
        lhs < rhs
            || (lhs == rhs
                && (self.start < other.start || (self.start == other.start && self.len < other.len)))
    }
}

impl<'a> EssayText<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            text,
            chars: text.chars().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> String {
        self.chars[start..end].iter().collect()
    }

    fn char_offset(&self, byte: usize) -> usize {
        self.text[..byte].chars().count()
    }

    /// Start offsets (in chars) of every verbatim occurrence, overlapping
    /// occurrences included.
    pub fn exact_occurrences(&self, quote: &str) -> Vec<usize> {
        let mut found = Vec::new();
        if quote.is_empty() {
            return found;
        }
        let mut from = 0;
        while let Some(pos) = self.text[from..].find(quote) {
            let byte = from + pos;
            found.push(self.char_offset(byte));
            let step = self.text[byte..].chars().next().map_or(1, char::len_utf8);
            from = byte + step;
        }
        found
    }

    pub fn anchor(&self, quote: &str, threshold: f64) -> Result<TextMatch, AnchorError> {
        if quote.is_empty() {
            return Err(AnchorError::EmptyQuote);
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(AnchorError::InvalidThreshold(threshold));
        }
        if let Some(byte) = self.text.find(quote) {
            let start = self.char_offset(byte);
            return Ok(TextMatch {
                start,
                end: start + quote.chars().count(),
                match_kind: MatchKind::Exact,
                similarity: 1.0,
            });
        }
        let pattern: Vec<char> = quote.chars().collect();
        match self.best_window(&pattern, threshold) {
            Some(best) => {
                let sim = similarity(best.distance, pattern.len(), best.len);
                if sim >= threshold {
                    Ok(TextMatch {
                        start: best.start,
                        end: best.start + best.len,
                        match_kind: MatchKind::Fuzzy,
                        similarity: sim,
                    })
                } else {
                    Err(AnchorError::NoAnchor {
                        best: sim,
                        threshold,
                    })
                }
            }
            None => Err(AnchorError::NoAnchor {
                best: 0.0,
                threshold,
            }),
        }
    }

    /// Best window of length within ±25% of the pattern length.
    ///
    /// A first pass computes, for every end offset, the smallest distance of
    /// the pattern to any substring ending there. Ends whose smallest
    /// distance already rules out the threshold are skipped; for the rest
    /// every admissible start is scored exactly.
    fn best_window(&self, pattern: &[char], threshold: f64) -> Option<Candidate> {
        let m = pattern.len();
        let n = self.chars.len();
        let min_len = ((3 * m).div_ceil(4)).max(1);
        let max_len = (5 * m) / 4;
        if n < min_len {
            return None;
        }

        let budget = ((1.0 - threshold) * max_len as f64 + 1e-9).floor() as usize;
        let end_floor = substring_distances(pattern, &self.chars);

        let mut best: Option<Candidate> = None;
        let mut rev_pattern: Vec<char> = pattern.to_vec();
        rev_pattern.reverse();
        let mut column = vec![0usize; m + 1];
        let mut next = vec![0usize; m + 1];

        for end in min_len..=n {
            if end_floor[end] > budget {
                continue;
            }
            // Global DP of the reversed pattern against the text read
            // backwards from `end`; after k characters, column[m] is the
            // distance of the pattern to chars[end - k..end].
            for (i, c) in column.iter_mut().enumerate() {
                *c = i;
            }
            let reach = max_len.min(end);
            for k in 1..=reach {
                let tc = self.chars[end - k];
                next[0] = k;
                for i in 1..=m {
                    let sub = column[i - 1] + usize::from(rev_pattern[i - 1] != tc);
                    next[i] = sub.min(column[i] + 1).min(next[i - 1] + 1);
                }
                std::mem::swap(&mut column, &mut next);
                if k >= min_len {
                    let cand = Candidate {
                        start: end - k,
                        len: k,
                        distance: column[m],
                        norm: m.max(k),
                    };
                    if best.as_ref().is_none_or(|b| cand.beats(b)) {
                        best = Some(cand);
                    }
                }
            }
        }
        best
    }
}

/// For each end offset `e` in `0..=text.len()`, the minimum edit distance
/// between `pattern` and any substring of `text` ending at `e`.
fn substring_distances(pattern: &[char], text: &[char]) -> Vec<usize> {
    let m = pattern.len();
    let mut out = Vec::with_capacity(text.len() + 1);
    let mut col: Vec<usize> = (0..=m).collect();
    let mut next = vec![0usize; m + 1];
    out.push(m);
    for tc in text {
        next[0] = 0;
        for i in 1..=m {
            let sub = col[i - 1] + usize::from(pattern[i - 1] != *tc);
            next[i] = sub.min(col[i] + 1).min(next[i - 1] + 1);
        }
        std::mem::swap(&mut col, &mut next);
        out.push(col[m]);
    }
    out
}

pub fn anchor_quote(essay: &str, quote: &str, threshold: f64) -> Result<TextMatch, AnchorError> {
    EssayText::new(essay).anchor(quote, threshold)
}

/// Anchors for every quote of an analysis, and the analysis restricted to
/// what could be anchored.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: BTreeMap<QuoteId, AnchoredSpan>,
    pub dropped: Vec<QuoteId>,
    /// The input analysis without dropped quotes and the relations touching them.
    pub pruned: ArgumentAnalysis,
    pub warnings: Vec<String>,
}

/// Anchors the main claim and every quote. Identical quotes are given
/// successive verbatim occurrences in ascending id order, falling back to the
/// leftmost occurrence once occurrences run out.
pub fn anchor_all(essay: &str, analysis: &ArgumentAnalysis, threshold: f64) -> AnchorSet {
    let text = EssayText::new(essay);
    let mut by_text: BTreeMap<&str, Vec<QuoteId>> = BTreeMap::new();
    for id in analysis.ids() {
        if let Some(quote) = analysis.quote_text(id) {
            by_text.entry(quote).or_default().push(id);
        }
    }

    let mut anchors = BTreeMap::new();
    let mut dropped = BTreeSet::new();
    let mut warnings = Vec::new();
    for (quote, mut ids) in by_text {
        ids.sort();
        let occurrences = text.exact_occurrences(quote);
        if !occurrences.is_empty() {
            let len = quote.chars().count();
            for (i, id) in ids.iter().enumerate() {
                let start = occurrences.get(i).copied().unwrap_or(occurrences[0]);
                let m = TextMatch {
                    start,
                    end: start + len,
                    match_kind: MatchKind::Exact,
                    similarity: 1.0,
                };
                anchors.insert(*id, m.for_quote(*id));
            }
            continue;
        }
        match text.anchor(quote, threshold) {
            Ok(m) => {
                for id in ids {
                    anchors.insert(id, m.for_quote(id));
                }
            }
            Err(err) => {
                for id in ids {
                    log::warn!("dropping quote {id}: {err}");
                    warnings.push(format!("quote {id} dropped: {err}"));
                    dropped.insert(id);
                }
            }
        }
    }

    let pruned = analysis.without(&dropped);
    let removed = analysis.relations.len() - pruned.relations.len();
    if removed > 0 {
        warnings.push(format!(
            "{removed} relation(s) removed because they reference dropped quotes"
        ));
    }
    AnchorSet {
        anchors,
        dropped: dropped.into_iter().collect(),
        pruned,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SupportRelation;

    #[test]
    fn exact_substring() {
        let m = anchor_quote("A. Cats are great. B.", "Cats are great.", 0.8).unwrap();
        assert_eq!((m.start, m.end), (3, 18));
        assert_eq!(m.match_kind, MatchKind::Exact);
        assert_eq!(m.similarity, 1.0);
    }

    #[test]
    fn exact_offsets_are_in_chars() {
        let essay = "Größe zählt. Cats are great.";
        let m = anchor_quote(essay, "Cats", 0.8).unwrap();
        assert_eq!(m.start, 13);
        assert_eq!(EssayText::new(essay).slice(m.start, m.end), "Cats");
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(anchor_quote("abc", "", 0.8), Err(AnchorError::EmptyQuote));
        assert!(matches!(
            anchor_quote("abc", "a", 0.0),
            Err(AnchorError::InvalidThreshold(_))
        ));
        assert!(matches!(
            anchor_quote("abc", "a", 1.5),
            Err(AnchorError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn quote_longer_than_essay() {
        assert!(matches!(
            anchor_quote("ab", "abcdefghijkl", 0.8),
            Err(AnchorError::NoAnchor { .. })
        ));
    }

    #[test]
    fn overlapping_occurrences() {
        let text = EssayText::new("aaaa");
        assert_eq!(text.exact_occurrences("aa"), vec![0, 1, 2]);
    }

    #[test]
    fn edit_distance_basics() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(edit_distance(&c("kitten"), &c("sitting")), 3);
        assert_eq!(edit_distance(&c(""), &c("abc")), 3);
        assert_eq!(edit_distance(&c("abc"), &c("")), 3);
        assert_eq!(edit_distance(&c("flaw"), &c("lawn")), 2);
    }

    fn analysis(claim: &str, quotes: &[(u32, &str)], relations: Vec<SupportRelation>) -> ArgumentAnalysis {
        ArgumentAnalysis {
            claim_content: "c".into(),
            claim_quote: claim.into(),
            quotes: quotes.iter().map(|(i, t)| (QuoteId(*i), t.to_string())).collect(),
            relations,
        }
    }

    #[test]
    fn anchor_all_verbatim() {
        let essay = "Taxes should fall. People keep more money. Spending rises.";
        let a = analysis(
            "Taxes should fall.",
            &[(1, "People keep more money."), (2, "Spending rises.")],
            vec![SupportRelation::independent(1, 0), SupportRelation::independent(2, 1)],
        );
        let set = anchor_all(essay, &a, DEFAULT_THRESHOLD);
        assert!(set.dropped.is_empty());
        assert_eq!(set.anchors.len(), 3);
        assert!(set.anchors.values().all(|s| s.match_kind == MatchKind::Exact));
        assert_eq!(set.pruned, a);
    }

    #[test]
    fn anchor_all_drops_unfindable() {
        let essay = "Taxes should fall. People keep more money. Spending rises.";
        let a = analysis(
            "Taxes should fall.",
            &[(1, "People keep more money."), (2, "Unicorns govern the moon entirely.")],
            vec![SupportRelation::independent(1, 0), SupportRelation::independent(2, 1)],
        );
        let set = anchor_all(essay, &a, DEFAULT_THRESHOLD);
        assert_eq!(set.dropped, vec![QuoteId(2)]);
        assert_eq!(set.pruned.relations, vec![SupportRelation::independent(1, 0)]);
        assert_eq!(set.warnings.len(), 2);
    }

    #[test]
    fn duplicate_quotes_take_successive_occurrences() {
        let essay = "It works. We tried. It works. Done.";
        let a = analysis(
            "Done.",
            &[(1, "It works."), (2, "It works."), (3, "We tried.")],
            vec![],
        );
        let set = anchor_all(essay, &a, DEFAULT_THRESHOLD);
        assert_eq!(set.anchors[&QuoteId(1)].start, 0);
        assert_eq!(set.anchors[&QuoteId(2)].start, 20);

        let essay = "It works. We tried. Done.";
        let a = analysis(
            "Done.",
            &[(1, "It works."), (2, "It works."), (3, "We tried.")],
            vec![],
        );
        let set = anchor_all(essay, &a, DEFAULT_THRESHOLD);
        assert_eq!(set.anchors[&QuoteId(1)].start, 0);
        assert_eq!(set.anchors[&QuoteId(2)].start, 0);
    }
}

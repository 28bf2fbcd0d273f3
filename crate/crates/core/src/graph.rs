//! Argument graph: the main claim, the atomic quotes that support it and the
//! support relations between them.
//!
//! The JSON shape mirrors what the structure-extraction prompt asks the model
//! for, so a stored analysis can be compared with raw model output after
//! whitespace normalization:
//!
//! ```json
//! {"claim":{"content":"...","claim_quote":"...",
//!   "support_relations":{"quotes":{"1":"..."},"relations":[[1,0],[[2,3],0]]}}}
//! ```
//!
//! Independent reasons are `[id, target]`, joined reasons `[[id1, id2], target]`.
//! Id `0` always refers to `claim_quote`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Identifier of a quote in an [`ArgumentAnalysis`]. `0` is the main claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuoteId(pub u32);

impl QuoteId {
    pub const CLAIM: QuoteId = QuoteId(0);

    pub fn is_claim(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for QuoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed support edge. One source is an independent reason, two or more
/// are joined reasons that only support the target together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SupportRelation {
    pub sources: BTreeSet<QuoteId>,
    pub target: QuoteId,
}

impl SupportRelation {
    pub fn independent(source: u32, target: u32) -> Self {
        Self {
            sources: BTreeSet::from([QuoteId(source)]),
            target: QuoteId(target),
        }
    }

    pub fn joined(sources: &[u32], target: u32) -> Self {
        Self {
            sources: sources.iter().copied().map(QuoteId).collect(),
            target: QuoteId(target),
        }
    }

    pub fn is_joined(&self) -> bool {
        self.sources.len() > 1
    }

    /// All ids this relation touches, sources first.
    pub fn endpoints(&self) -> impl Iterator<Item = QuoteId> + '_ {
        self.sources.iter().copied().chain(std::iter::once(self.target))
    }

    pub fn touches(&self, id: QuoteId) -> bool {
        self.target == id || self.sources.contains(&id)
    }
}

impl fmt::Display for SupportRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sources: Vec<String> = self.sources.iter().map(|s| s.to_string()).collect();
        write!(f, "{}->{}", sources.join("&"), self.target)
    }
}

impl Serialize for SupportRelation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        if self.sources.len() == 1 {
            let only = self.sources.iter().next().expect("non-empty sources");
            seq.serialize_element(only)?;
        } else {
            let group: Vec<QuoteId> = self.sources.iter().copied().collect();
            seq.serialize_element(&group)?;
        }
        seq.serialize_element(&self.target)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SupportRelation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        relation_from_value(&value).map_err(de::Error::custom)
    }
}

/// Structure extracted from one essay.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArgumentAnalysis {
    /// The author's position, paraphrased by the model.
    pub claim_content: String,
    /// Verbatim main thesis; empty when the essay contains no argumentation.
    pub claim_quote: String,
    pub quotes: BTreeMap<QuoteId, String>,
    pub relations: Vec<SupportRelation>,
}

impl ArgumentAnalysis {
    pub fn is_empty_argument(&self) -> bool {
        self.claim_quote.is_empty()
    }

    /// Text for an id, resolving `0` to the main claim.
    pub fn quote_text(&self, id: QuoteId) -> Option<&str> {
        if id.is_claim() {
            if self.claim_quote.is_empty() {
                None
            } else {
                Some(self.claim_quote.as_str())
            }
        } else {
            self.quotes.get(&id).map(String::as_str)
        }
    }

    pub fn resolves(&self, id: QuoteId) -> bool {
        self.quote_text(id).is_some()
    }

    /// Every id with text, main claim first.
    pub fn ids(&self) -> Vec<QuoteId> {
        let mut ids = Vec::with_capacity(self.quotes.len() + 1);
        if !self.claim_quote.is_empty() {
            ids.push(QuoteId::CLAIM);
        }
        ids.extend(self.quotes.keys().copied());
        ids
    }

    pub fn to_value(&self) -> Value {
        let quotes: serde_json::Map<String, Value> = self
            .quotes
            .iter()
            .map(|(id, text)| (id.to_string(), Value::String(text.clone())))
            .collect();
        json!({
            "claim": {
                "content": self.claim_content,
                "claim_quote": self.claim_quote,
                "support_relations": {
                    "quotes": quotes,
                    "relations": self.relations,
                }
            }
        })
    }

    /// Canonical compact JSON.
    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    /// Copy of this analysis without the given quotes and without every
    /// relation touching one of them.
    pub fn without(&self, dropped: &BTreeSet<QuoteId>) -> ArgumentAnalysis {
        let mut pruned = self.clone();
        pruned.quotes.retain(|id, _| !dropped.contains(id));
        pruned
            .relations
            .retain(|rel| !rel.endpoints().any(|id| dropped.contains(&id)));
        if dropped.contains(&QuoteId::CLAIM) {
            pruned.relations.retain(|rel| !rel.touches(QuoteId::CLAIM));
        }
        pruned
    }
}

impl Serialize for ArgumentAnalysis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ArgumentAnalysis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        parse_analysis_value(&value)
            .map(|parsed| parsed.analysis)
            .map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("relation references unknown quote id {0}")]
    DanglingId(QuoteId),
    #[error("support cycle among quotes {0:?}")]
    Cycle(Vec<QuoteId>),
    #[error("unknown quote id {0}")]
    UnknownId(QuoteId),
    #[error("invalid JSON: {0}")]
    Json(String),
}

/// One broken invariant found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    DanglingId { id: QuoteId },
    CycleDetected { ids: BTreeSet<QuoteId> },
    EmptySources { relation: usize },
    SelfSupport { relation: usize, id: QuoteId },
    ClaimInJoinedGroup { relation: usize },
    DuplicateRelation { relation: usize },
    ReservedQuoteKey,
    EmptyQuote { id: QuoteId },
    EmptyClaimWithContent,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingId { id } => write!(f, "dangling-id({id})"),
            Violation::CycleDetected { ids } => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "cycle-detected({{{}}})", ids.join(","))
            }
            Violation::EmptySources { relation } => write!(f, "empty-sources(relation {relation})"),
            Violation::SelfSupport { relation, id } => {
                write!(f, "self-support(relation {relation}, id {id})")
            }
            Violation::ClaimInJoinedGroup { relation } => {
                write!(f, "claim-in-joined-group(relation {relation})")
            }
            Violation::DuplicateRelation { relation } => {
                write!(f, "duplicate-relation(relation {relation})")
            }
            Violation::ReservedQuoteKey => write!(f, "reserved-quote-key(0)"),
            Violation::EmptyQuote { id } => write!(f, "empty-quote({id})"),
            Violation::EmptyClaimWithContent => write!(f, "empty-claim-with-content"),
        }
    }
}

/// Result of [`parse_analysis`]: the analysis plus non-fatal notices
/// (deduplicated relations).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnalysis {
    pub analysis: ArgumentAnalysis,
    pub warnings: Vec<String>,
}

pub fn parse_analysis(raw: &str) -> Result<ParsedAnalysis, GraphError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| GraphError::Json(e.to_string()))?;
    parse_analysis_value(&value)
}

pub fn parse_analysis_value(value: &Value) -> Result<ParsedAnalysis, GraphError> {
    let schema = |msg: &str| GraphError::Schema(msg.to_string());

    let claim = value
        .get("claim")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("missing object `claim`"))?;
    let claim_content = claim
        .get("content")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("missing string `claim.content`"))?
        .to_string();
    let claim_quote = claim
        .get("claim_quote")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("missing string `claim.claim_quote`"))?
        .to_string();
    let support = claim
        .get("support_relations")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("missing object `claim.support_relations`"))?;
    let raw_quotes = support
        .get("quotes")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("missing object `support_relations.quotes`"))?;
    let raw_relations = support
        .get("relations")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("missing array `support_relations.relations`"))?;

    let mut quotes = BTreeMap::new();
    for (key, text) in raw_quotes {
        let id: u32 = key
            .trim()
            .parse()
            .map_err(|_| GraphError::Schema(format!("non-numeric quote key {key:?}")))?;
        if id == 0 {
            return Err(schema("quote key 0 is reserved for claim_quote"));
        }
        let text = text
            .as_str()
            .ok_or_else(|| GraphError::Schema(format!("quote {id} is not a string")))?;
        if text.is_empty() {
            return Err(GraphError::Schema(format!("quote {id} is empty")));
        }
        if quotes.insert(QuoteId(id), text.to_string()).is_some() {
            return Err(GraphError::Schema(format!("quote key {id} appears twice")));
        }
    }

    let mut relations: Vec<SupportRelation> = Vec::with_capacity(raw_relations.len());
    let mut warnings = Vec::new();
    for (index, entry) in raw_relations.iter().enumerate() {
        let rel = relation_from_value(entry)
            .map_err(|msg| GraphError::Schema(format!("relation {index}: {msg}")))?;
        if rel.sources.contains(&rel.target) {
            return Err(GraphError::Schema(format!(
                "relation {index}: quote {} supports itself",
                rel.target
            )));
        }
        if rel.is_joined() && rel.sources.contains(&QuoteId::CLAIM) {
            return Err(GraphError::Schema(format!(
                "relation {index}: the main claim cannot be part of a joined group"
            )));
        }
        if relations.contains(&rel) {
            warnings.push(format!("duplicate relation {rel} removed"));
            continue;
        }
        relations.push(rel);
    }

    if claim_quote.is_empty() && (!quotes.is_empty() || !relations.is_empty()) {
        return Err(schema(
            "claim_quote is empty but quotes or relations are present",
        ));
    }

    let analysis = ArgumentAnalysis {
        claim_content,
        claim_quote,
        quotes,
        relations,
    };

    for rel in &analysis.relations {
        for id in rel.endpoints() {
            if !analysis.resolves(id) {
                return Err(GraphError::DanglingId(id));
            }
        }
    }
    if let Some(cycle) = find_cycles(&analysis.relations).into_iter().next() {
        return Err(GraphError::Cycle(cycle.into_iter().collect()));
    }

    Ok(ParsedAnalysis { analysis, warnings })
}

fn id_from_value(value: &Value) -> Result<u32, String> {
    match value {
        Value::Number(n) => n
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| format!("id {n} is not a non-negative integer")),
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| format!("id {s:?} is not numeric")),
        other => Err(format!("expected an id, found {other}")),
    }
}

fn relation_from_value(value: &Value) -> Result<SupportRelation, String> {
    let pair = value
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| format!("expected [source(s), target], found {value}"))?;
    let sources: BTreeSet<QuoteId> = match &pair[0] {
        Value::Array(group) => group
            .iter()
            .map(|v| id_from_value(v).map(QuoteId))
            .collect::<Result<_, _>>()?,
        single => BTreeSet::from([QuoteId(id_from_value(single)?)]),
    };
    if sources.is_empty() {
        return Err("joined group has no sources".to_string());
    }
    let target = QuoteId(id_from_value(&pair[1])?);
    Ok(SupportRelation { sources, target })
}

fn support_digraph(relations: &[SupportRelation]) -> DiGraphMap<u32, ()> {
    let mut graph = DiGraphMap::new();
    for rel in relations {
        for source in &rel.sources {
            graph.add_edge(source.0, rel.target.0, ());
        }
    }
    graph
}

/// Strongly connected components of size > 1, i.e. support cycles. Self
/// loops are reported separately as self-support.
fn find_cycles(relations: &[SupportRelation]) -> Vec<BTreeSet<QuoteId>> {
    let graph = support_digraph(relations);
    let mut cycles: Vec<BTreeSet<QuoteId>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1)
        .map(|scc| scc.into_iter().map(QuoteId).collect())
        .collect();
    cycles.sort();
    cycles
}

/// Checks every invariant of an analysis. An empty list means the analysis is
/// well formed.
pub fn validate_graph(analysis: &ArgumentAnalysis) -> Vec<Violation> {
    let mut violations = Vec::new();

    if analysis.quotes.contains_key(&QuoteId::CLAIM) {
        violations.push(Violation::ReservedQuoteKey);
    }
    for (id, text) in &analysis.quotes {
        if text.is_empty() {
            violations.push(Violation::EmptyQuote { id: *id });
        }
    }
    if analysis.claim_quote.is_empty()
        && (!analysis.quotes.is_empty() || !analysis.relations.is_empty())
    {
        violations.push(Violation::EmptyClaimWithContent);
    }

    let mut dangling = BTreeSet::new();
    for (index, rel) in analysis.relations.iter().enumerate() {
        if rel.sources.is_empty() {
            violations.push(Violation::EmptySources { relation: index });
        }
        if rel.sources.contains(&rel.target) {
            violations.push(Violation::SelfSupport {
                relation: index,
                id: rel.target,
            });
        }
        if rel.is_joined() && rel.sources.contains(&QuoteId::CLAIM) {
            violations.push(Violation::ClaimInJoinedGroup { relation: index });
        }
        if analysis.relations[..index].contains(rel) {
            violations.push(Violation::DuplicateRelation { relation: index });
        }
        for id in rel.endpoints() {
            if !analysis.resolves(id) {
                dangling.insert(id);
            }
        }
    }
    violations.extend(dangling.into_iter().map(|id| Violation::DanglingId { id }));
    violations.extend(
        find_cycles(&analysis.relations)
            .into_iter()
            .map(|ids| Violation::CycleDetected { ids }),
    );
    violations
}

/// Support tree rooted at one quote. Each group is one relation targeting the
/// node; a joined relation keeps its sources together in a single group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportTree {
    pub id: QuoteId,
    pub groups: Vec<Vec<SupportTree>>,
}

impl SupportTree {
    pub fn leaf(id: u32) -> Self {
        Self {
            id: QuoteId(id),
            groups: Vec::new(),
        }
    }

    pub fn is_axiom(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .groups
            .iter()
            .flatten()
            .map(SupportTree::node_count)
            .sum::<usize>()
    }

    /// Ids of all leaves, left to right.
    pub fn axioms(&self) -> Vec<QuoteId> {
        if self.is_axiom() {
            return vec![self.id];
        }
        self.groups
            .iter()
            .flatten()
            .flat_map(SupportTree::axioms)
            .collect()
    }
}

/// Expands the support chains under `id` until reaching unsupported quotes.
pub fn trace_to_axioms(analysis: &ArgumentAnalysis, id: QuoteId) -> Result<SupportTree, GraphError> {
    if !analysis.resolves(id) {
        return Err(GraphError::UnknownId(id));
    }
    let mut path = Vec::new();
    expand(analysis, id, &mut path)
}

fn expand(
    analysis: &ArgumentAnalysis,
    id: QuoteId,
    path: &mut Vec<QuoteId>,
) -> Result<SupportTree, GraphError> {
    if let Some(pos) = path.iter().position(|p| *p == id) {
        return Err(GraphError::Cycle(path[pos..].to_vec()));
    }
    path.push(id);
    let mut groups = Vec::new();
    for rel in analysis.relations.iter().filter(|r| r.target == id) {
        let members = rel
            .sources
            .iter()
            .map(|source| expand(analysis, *source, path))
            .collect::<Result<Vec<_>, _>>()?;
        groups.push(members);
    }
    path.pop();
    Ok(SupportTree { id, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analysis(quotes: &[(u32, &str)], relations: Vec<SupportRelation>) -> ArgumentAnalysis {
        ArgumentAnalysis {
            claim_content: "c".into(),
            claim_quote: "Q0".into(),
            quotes: quotes
                .iter()
                .map(|(id, t)| (QuoteId(*id), t.to_string()))
                .collect(),
            relations,
        }
    }

    #[test]
    fn parses_independent_relation() {
        let raw = r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"Q1"},"relations":[[1,0]]}}}"#;
        let parsed = parse_analysis(raw).unwrap();
        assert_eq!(parsed.analysis.relations, vec![SupportRelation::independent(1, 0)]);
        assert!(!parsed.analysis.relations[0].is_joined());
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn parses_joined_relation() {
        let raw = r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"2":"a","3":"b"},"relations":[[[2,3],0]]}}}"#;
        let parsed = parse_analysis(raw).unwrap();
        assert_eq!(parsed.analysis.relations, vec![SupportRelation::joined(&[2, 3], 0)]);
        assert!(parsed.analysis.relations[0].is_joined());
    }

    #[test]
    fn empty_argument_is_legal() {
        let raw = r#"{"claim":{"content":"","claim_quote":"","support_relations":{"quotes":{},"relations":[]}}}"#;
        let parsed = parse_analysis(raw).unwrap();
        assert!(parsed.analysis.is_empty_argument());
        assert!(validate_graph(&parsed.analysis).is_empty());
    }

    #[test]
    fn two_cycle_is_rejected() {
        let raw = r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"Q1"},"relations":[[1,0],[0,1]]}}}"#;
        assert!(matches!(parse_analysis(raw), Err(GraphError::Cycle(ids)) if ids.len() == 2));
    }

    #[test]
    fn schema_errors() {
        let cases = [
            r#"{"nope":1}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0"}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"x":"a"},"relations":[]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a"},"relations":[[1,1]]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a"},"relations":[[1]]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a"},"relations":[[[],0]]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a","2":"b"},"relations":[[[0,1],2]]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"0":"a"},"relations":[]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":""},"relations":[]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"","support_relations":{"quotes":{"1":"a"},"relations":[]}}}"#,
            r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a"},"relations":[[-1,0]]}}}"#,
        ];
        for raw in cases {
            assert!(
                matches!(parse_analysis(raw), Err(GraphError::Schema(_))),
                "expected schema error for {raw}"
            );
        }
        assert!(matches!(parse_analysis("{"), Err(GraphError::Json(_))));
    }

    #[test]
    fn dangling_id_is_rejected() {
        let raw = r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a"},"relations":[[7,0]]}}}"#;
        assert_eq!(parse_analysis(raw), Err(GraphError::DanglingId(QuoteId(7))));
    }

    #[test]
    fn string_ids_and_duplicates() {
        let raw = r#"{"claim":{"content":"c","claim_quote":"Q0","support_relations":{"quotes":{"1":"a","2":"b"},"relations":[["1","0"],[1,0],[[2,1],0],[[1,2],0]]}}}"#;
        let parsed = parse_analysis(raw).unwrap();
        assert_eq!(
            parsed.analysis.relations,
            vec![SupportRelation::independent(1, 0), SupportRelation::joined(&[1, 2], 0)]
        );
        assert_eq!(parsed.warnings.len(), 2);
    }

    #[test]
    fn one_quote_may_support_several_targets() {
        let a = analysis(
            &[(1, "a"), (2, "b")],
            vec![SupportRelation::independent(1, 0), SupportRelation::independent(1, 2)],
        );
        assert!(validate_graph(&a).is_empty());
    }

    #[test]
    fn validate_reports_dangling_and_cycles() {
        let a = analysis(&[(1, "a")], vec![SupportRelation::independent(7, 0)]);
        assert_eq!(validate_graph(&a), vec![Violation::DanglingId { id: QuoteId(7) }]);

        let a = analysis(
            &[(1, "a"), (2, "b")],
            vec![SupportRelation::independent(1, 2), SupportRelation::independent(2, 1)],
        );
        assert_eq!(
            validate_graph(&a),
            vec![Violation::CycleDetected {
                ids: BTreeSet::from([QuoteId(1), QuoteId(2)])
            }]
        );
        assert_eq!(validate_graph(&a)[0].to_string(), "cycle-detected({1,2})");
    }

    #[test]
    fn trace_chain() {
        let a = analysis(
            &[(1, "a"), (2, "b")],
            vec![SupportRelation::independent(1, 0), SupportRelation::independent(2, 1)],
        );
        let tree = trace_to_axioms(&a, QuoteId::CLAIM).unwrap();
        let expected = SupportTree {
            id: QuoteId(0),
            groups: vec![vec![SupportTree {
                id: QuoteId(1),
                groups: vec![vec![SupportTree::leaf(2)]],
            }]],
        };
        assert_eq!(tree, expected);
        assert_eq!(tree.axioms(), vec![QuoteId(2)]);
    }

    #[test]
    fn trace_without_relations_is_leaf() {
        let a = analysis(&[], vec![]);
        assert_eq!(trace_to_axioms(&a, QuoteId::CLAIM).unwrap(), SupportTree::leaf(0));
        assert_eq!(
            trace_to_axioms(&a, QuoteId(4)),
            Err(GraphError::UnknownId(QuoteId(4)))
        );
    }

    #[test]
    fn trace_keeps_joined_group_together() {
        let a = analysis(
            &[(2, "b"), (3, "c"), (4, "d")],
            vec![SupportRelation::joined(&[2, 3], 0), SupportRelation::independent(4, 2)],
        );
        let tree = trace_to_axioms(&a, QuoteId::CLAIM).unwrap();
        assert_eq!(tree.groups.len(), 1);
        let group = &tree.groups[0];
        assert_eq!(group.len(), 2);
        assert_eq!(group[0].id, QuoteId(2));
        assert_eq!(group[0].groups, vec![vec![SupportTree::leaf(4)]]);
        assert_eq!(group[1], SupportTree::leaf(3));
    }

    #[test]
    fn without_prunes_touching_relations() {
        let a = analysis(
            &[(1, "a"), (2, "b"), (3, "c")],
            vec![
                SupportRelation::joined(&[1, 2], 0),
                SupportRelation::independent(3, 0),
                SupportRelation::independent(1, 3),
            ],
        );
        let pruned = a.without(&BTreeSet::from([QuoteId(2)]));
        assert_eq!(pruned.relations.len(), 2);
        assert!(!pruned.quotes.contains_key(&QuoteId(2)));
        assert!(validate_graph(&pruned).is_empty());
    }

    #[test]
    fn serializes_in_prompt_shape() {
        let a = analysis(
            &[(1, "a"), (2, "b"), (3, "c")],
            vec![SupportRelation::independent(1, 0), SupportRelation::joined(&[2, 3], 0)],
        );
        assert_eq!(
            a.to_json(),
            r#"{"claim":{"claim_quote":"Q0","content":"c","support_relations":{"quotes":{"1":"a","2":"b","3":"c"},"relations":[[1,0],[[2,3],0]]}}}"#
        );
    }
}

//! The three analysis stages: structure extraction, per-relation validity
//! checking and plan generation.
//!
//! Stages are independent calls with separate contexts. The graph produced by
//! extraction is never modified by later stages; each relation is evaluated
//! in its own call (joined sources together), concurrently up to a cap, and
//! results are keyed by relation index so completion order does not matter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::anchor::{anchor_all, AnchoredSpan, EssayText, DEFAULT_THRESHOLD};
use crate::evaluation::{EvaluatedAnalysis, Evaluation};
use crate::gateway::{Gateway, GatewayError, JsonRequest, Message, ModelConfig, PromptKind};
use crate::graph::{parse_analysis_value, validate_graph, ArgumentAnalysis, GraphError, QuoteId};
use crate::plan::Plan;
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Structure,
    Validity,
    Plan,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Structure => "structure",
            Stage::Validity => "validity",
            Stage::Plan => "plan",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("essay is empty")]
    EmptyEssay,
    #[error("{stage} stage failed: {source}")]
    Gateway { stage: Stage, source: GatewayError },
    #[error("structure output rejected: {0}")]
    Structure(#[from] GraphError),
    #[error("evaluation output malformed: {0}")]
    MalformedEvaluation(String),
    #[error("evaluation still incoherent after corrective retry: {0}")]
    Coherence(String),
    #[error("plan output malformed: {0}")]
    MalformedPlan(String),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::EmptyEssay | PipelineError::Structure(_) => Stage::Structure,
            PipelineError::Gateway { stage, .. } => *stage,
            PipelineError::MalformedEvaluation(_) | PipelineError::Coherence(_) => Stage::Validity,
            PipelineError::MalformedPlan(_) => Stage::Plan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub anchor_threshold: f64,
    /// Maximum validity calls in flight.
    pub concurrency: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            anchor_threshold: DEFAULT_THRESHOLD,
            concurrency: 4,
        }
    }
}

/// Output of structure extraction, with unanchorable quotes already pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub analysis: ArgumentAnalysis,
    pub anchors: BTreeMap<QuoteId, AnchoredSpan>,
    pub dropped: Vec<QuoteId>,
    pub warnings: Vec<String>,
    pub empty_argument: bool,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationVerdict {
    pub evaluation: Evaluation,
    pub warnings: Vec<String>,
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub structure: f64,
    pub validity: f64,
    pub plan: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.structure + self.validity + self.plan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub essay: String,
    pub empty_argument: bool,
    pub analysis: ArgumentAnalysis,
    pub anchors: BTreeMap<QuoteId, AnchoredSpan>,
    pub dropped: Vec<QuoteId>,
    pub evaluated: EvaluatedAnalysis,
    pub plan: Plan,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

impl PipelineResult {
    fn empty(essay: &str, structure: Structure) -> Self {
        PipelineResult {
            essay: essay.to_string(),
            empty_argument: true,
            evaluated: EvaluatedAnalysis {
                analysis: structure.analysis.clone(),
                ..EvaluatedAnalysis::default()
            },
            analysis: structure.analysis,
            anchors: structure.anchors,
            dropped: structure.dropped,
            plan: Plan::default(),
            warnings: structure.warnings,
            timings: StageTimings {
                structure: structure.latency,
                ..StageTimings::default()
            },
        }
    }

    /// Serialization without wall-clock timings; identical model replies
    /// give identical bytes.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("plain data");
        if let Value::Object(map) = &mut value {
            map.remove("timings");
        }
        serde_json::to_string_pretty(&value).expect("plain data")
    }

    pub fn invalid_count(&self) -> usize {
        self.evaluated.invalid_relations().len()
    }

    /// Broken invariants, empty when the result is sound.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems: Vec<String> = validate_graph(&self.analysis)
            .into_iter()
            .map(|v| format!("graph: {v}"))
            .collect();
        if self.evaluated.analysis != self.analysis {
            problems.push("evaluated graph differs from extracted graph".into());
        }
        if let Err(e) = self.evaluated.check_accounting() {
            problems.push(e);
        }
        let len = self.essay.chars().count();
        for span in self.anchors.values() {
            if span.start >= span.end || span.end > len {
                problems.push(format!("anchor for {} outside essay", span.quote_id));
            }
        }
        for (i, rel) in self.analysis.relations.iter().enumerate() {
            for id in rel.endpoints() {
                if !self.anchors.contains_key(&id) {
                    problems.push(format!("relation {i} endpoint {id} not anchored"));
                }
            }
        }
        if !self.plan.is_contiguous() {
            problems.push("plan steps are not numbered 1..n".into());
        }
        let invalid: BTreeSet<usize> = self.evaluated.invalid_relations().into_iter().collect();
        for step in &self.plan.steps {
            match step.relation {
                Some(r) if invalid.contains(&r) => {}
                _ => problems.push(format!("plan step {} does not address an invalid relation", step.step_number)),
            }
            if step.anchor.is_none() {
                problems.push(format!("plan step {} is not anchored", step.step_number));
            }
        }
        problems
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub struct Pipeline {
    gateway: Arc<Gateway>,
    settings: PipelineSettings,
}

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, settings: PipelineSettings) -> Self {
        Self { gateway, settings }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn config(&self) -> &ModelConfig {
        self.gateway.config()
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    pub async fn extract_structure(&self, essay: &str) -> Result<Structure, PipelineError> {
        if essay.trim().is_empty() {
            return Err(PipelineError::EmptyEssay);
        }
        let started = Instant::now();
        let request = JsonRequest::prompt(
            PromptKind::Structure,
            prompts::structure_prompt(essay),
            prompts::schema(PromptKind::Structure),
        );
        let record = self
            .gateway
            .complete_json_checked(request, |value| {
                parse_analysis_value(value).map(|_| ()).map_err(|e| e.to_string())
            })
            .await
            .map_err(|source| PipelineError::Gateway {
                stage: Stage::Structure,
                source,
            })?;
        let parsed = parse_analysis_value(record.value())?;
        let mut warnings = parsed.warnings;

        if parsed.analysis.is_empty_argument() {
            return Ok(Structure {
                analysis: parsed.analysis,
                anchors: BTreeMap::new(),
                dropped: Vec::new(),
                warnings,
                empty_argument: true,
                latency: started.elapsed().as_secs_f64(),
            });
        }

        let anchored = anchor_all(essay, &parsed.analysis, self.settings.anchor_threshold);
        warnings.extend(anchored.warnings);
        Ok(Structure {
            analysis: anchored.pruned,
            anchors: anchored.anchors,
            dropped: anchored.dropped,
            warnings,
            empty_argument: false,
            latency: started.elapsed().as_secs_f64(),
        })
    }

    /// Validity of `evidence` (taken together) as support for `target`.
    pub async fn evaluate_relation(
        &self,
        essay: &str,
        target: &str,
        evidence: &[&str],
    ) -> Result<RelationVerdict, PipelineError> {
        let started = Instant::now();
        let prompt = prompts::validity_prompt(target, evidence, essay);
        let schema = prompts::schema(PromptKind::Validity);
        let gateway_err = |source| PipelineError::Gateway {
            stage: Stage::Validity,
            source,
        };
        let parse = |value: &Value| {
            serde_json::from_value::<Evaluation>(value.clone())
                .map_err(|e| PipelineError::MalformedEvaluation(e.to_string()))
        };

        let first = self
            .gateway
            .complete_json(JsonRequest::prompt(PromptKind::Validity, prompt.clone(), schema.clone()))
            .await
            .map_err(gateway_err)?;
        let mut evaluation = parse(first.value())?;
        let mut warnings = Vec::new();

        if let Err(problem) = evaluation.check_coherence() {
            warnings.push(format!("incoherent verdict for {target:?} retried: {problem}"));
            let retry = JsonRequest {
                kind: PromptKind::Validity,
                system: None,
                messages: vec![
                    Message::user(prompt),
                    Message::assistant(first.raw_text.clone()),
                    Message::user(format!(
                        "Your evaluation is inconsistent: {problem}\nReturn the corrected JSON in the same format."
                    )),
                ],
                schema,
            };
            let second = self.gateway.complete_json(retry).await.map_err(gateway_err)?;
            evaluation = parse(second.value())?;
            evaluation.check_coherence().map_err(PipelineError::Coherence)?;
        }

        let given: BTreeSet<String> = evidence.iter().map(|e| normalize(e)).collect();
        let returned: BTreeSet<String> = evaluation.evidence.iter().map(|e| normalize(e)).collect();
        if given != returned {
            warnings.push(format!(
                "evidence returned for {target:?} differs from the relation's sources"
            ));
        }

        Ok(RelationVerdict {
            evaluation,
            warnings,
            latency: started.elapsed().as_secs_f64(),
        })
    }

    /// One verdict per relation; failures are recorded, not fatal.
    pub async fn evaluate_all(
        &self,
        essay: &str,
        analysis: &ArgumentAnalysis,
    ) -> (EvaluatedAnalysis, Vec<String>) {
        // Owned inputs keep the future Send.
        let inputs: Vec<(usize, String, Vec<String>)> = analysis
            .relations
            .iter()
            .enumerate()
            .map(|(index, rel)| {
                let text = |id| analysis.quote_text(id).unwrap_or_default().to_string();
                (index, text(rel.target), rel.sources.iter().map(|s| text(*s)).collect())
            })
            .collect();
        let jobs = inputs.into_iter().map(|(index, target, evidence)| async move {
            let evidence: Vec<&str> = evidence.iter().map(String::as_str).collect();
            (index, self.evaluate_relation(essay, &target, &evidence).await)
        });
        let mut outcomes: Vec<_> = stream::iter(jobs)
            .buffer_unordered(self.settings.concurrency.max(1))
            .collect()
            .await;
        outcomes.sort_by_key(|(index, _)| *index);

        let mut evaluated = EvaluatedAnalysis {
            analysis: analysis.clone(),
            ..EvaluatedAnalysis::default()
        };
        let mut warnings = Vec::new();
        for (index, outcome) in outcomes {
            match outcome {
                Ok(verdict) => {
                    warnings.extend(
                        verdict
                            .warnings
                            .into_iter()
                            .map(|w| format!("relation {index}: {w}")),
                    );
                    evaluated.evaluations.insert(index, verdict.evaluation);
                }
                Err(err) => {
                    warnings.push(format!("relation {index}: evaluation failed: {err}"));
                    evaluated.failed.insert(index, err.to_string());
                }
            }
        }
        (evaluated, warnings)
    }

    /// Plan over the invalid relations. Steps that cannot be anchored or that
    /// do not address an invalid relation are dropped with a warning.
    pub async fn generate_plan(
        &self,
        essay: &str,
        evaluated: &EvaluatedAnalysis,
        anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    ) -> Result<(Plan, Vec<String>), PipelineError> {
        let invalid = evaluated.invalid_relations();
        if invalid.is_empty() {
            return Ok((Plan::default(), Vec::new()));
        }
        let request = JsonRequest::prompt(
            PromptKind::Plan,
            prompts::plan_prompt(evaluated),
            prompts::schema(PromptKind::Plan),
        );
        let record = self
            .gateway
            .complete_json(request)
            .await
            .map_err(|source| PipelineError::Gateway {
                stage: Stage::Plan,
                source,
            })?;
        let proposed: Plan = serde_json::from_value(record.value().clone())
            .map_err(|e| PipelineError::MalformedPlan(e.to_string()))?;

        let text = EssayText::new(essay);
        let mut plan = Plan::default();
        let mut warnings = Vec::new();
        for mut step in proposed.steps {
            let span = match text.anchor(&step.target_text, self.settings.anchor_threshold) {
                Ok(m) => m.for_quote(QuoteId::CLAIM),
                Err(err) => {
                    warnings.push(format!("plan step {} dropped: target text {err}", step.step_number));
                    continue;
                }
            };
            let best = invalid
                .iter()
                .filter_map(|&r| {
                    let rel = &evaluated.analysis.relations[r];
                    let overlap = rel
                        .endpoints()
                        .filter_map(|id| anchors.get(&id))
                        .map(|a| a.overlap(&span))
                        .max()
                        .unwrap_or(0);
                    (overlap > 0).then_some((overlap, r))
                })
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            match best {
                Some((_, relation)) => {
                    let quote_id = endpoint_at(&evaluated.analysis, anchors, relation, &span);
                    step.relation = Some(relation);
                    step.anchor = Some(AnchoredSpan { quote_id, ..span });
                    plan.steps.push(step);
                }
                None => warnings.push(format!(
                    "plan step {} dropped: {:?} is not part of an invalid relation",
                    step.step_number, step.target_text
                )),
            }
        }
        plan.renumber();
        Ok((plan, warnings))
    }

    pub async fn run(&self, essay: &str) -> Result<PipelineResult, PipelineError> {
        let structure = self.extract_structure(essay).await?;
        if structure.empty_argument {
            return Ok(PipelineResult::empty(essay, structure));
        }
        let mut warnings = structure.warnings;
        let mut timings = StageTimings {
            structure: structure.latency,
            ..StageTimings::default()
        };

        let started = Instant::now();
        let (evaluated, eval_warnings) = self.evaluate_all(essay, &structure.analysis).await;
        timings.validity = started.elapsed().as_secs_f64();
        warnings.extend(eval_warnings);

        let started = Instant::now();
        let (plan, plan_warnings) = self.generate_plan(essay, &evaluated, &structure.anchors).await?;
        timings.plan = started.elapsed().as_secs_f64();
        warnings.extend(plan_warnings);

        Ok(PipelineResult {
            essay: essay.to_string(),
            empty_argument: false,
            analysis: structure.analysis,
            anchors: structure.anchors,
            dropped: structure.dropped,
            evaluated,
            plan,
            warnings,
            timings,
        })
    }
}

/// Quote of `relation` whose anchor overlaps `span` most.
fn endpoint_at(
    analysis: &ArgumentAnalysis,
    anchors: &BTreeMap<QuoteId, AnchoredSpan>,
    relation: usize,
    span: &AnchoredSpan,
) -> QuoteId {
    analysis.relations[relation]
        .endpoints()
        .filter_map(|id| anchors.get(&id).map(|a| (a.overlap(span), id)))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, id)| id)
        .unwrap_or(QuoteId::CLAIM)
}

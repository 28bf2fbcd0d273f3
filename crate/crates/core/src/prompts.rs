//! Prompt templates and the JSON schemas their replies must satisfy.
//!
//! Templates live in `prompts/` and are used verbatim; `prompts/DEVIATIONS.md`
//! lists every way the orchestration fills or extends them.

use std::sync::OnceLock;

use serde_json::Value;

use crate::evaluation::EvaluatedAnalysis;
use crate::gateway::PromptKind;
use crate::plan::{Plan, PlanStep};

pub const STRUCTURE_TEMPLATE: &str = include_str!("../prompts/structure.txt");
pub const VALIDITY_TEMPLATE: &str = include_str!("../prompts/validity.txt");
pub const PLAN_TEMPLATE: &str = include_str!("../prompts/plan.txt");
pub const SOCRATIC_TEMPLATE: &str = include_str!("../prompts/socratic.txt");
pub const SOCRATIC_EXTENSION: &str = include_str!("../prompts/socratic_extension.txt");

const STRUCTURE_SCHEMA: &str = include_str!("../schemas/structure.schema.json");
const VALIDITY_SCHEMA: &str = include_str!("../schemas/validity.schema.json");
const PLAN_SCHEMA: &str = include_str!("../schemas/plan.schema.json");
const SOCRATIC_SCHEMA: &str = include_str!("../schemas/socratic.schema.json");

pub const ESSAY_PLACEHOLDER: &str = "{{ESSAY_CONTENT}}";

/// Output schema for a prompt.
pub fn schema(kind: PromptKind) -> Value {
    static SCHEMAS: OnceLock<[Value; 4]> = OnceLock::new();
    let all = SCHEMAS.get_or_init(|| {
        [STRUCTURE_SCHEMA, VALIDITY_SCHEMA, PLAN_SCHEMA, SOCRATIC_SCHEMA]
            .map(|raw| serde_json::from_str(raw).expect("bundled schema is valid JSON"))
    });
    let index = match kind {
        PromptKind::Structure => 0,
        PromptKind::Validity => 1,
        PromptKind::Plan => 2,
        PromptKind::Socratic => 3,
    };
    all[index].clone()
}

pub fn structure_prompt(essay: &str) -> String {
    STRUCTURE_TEMPLATE.replace(ESSAY_PLACEHOLDER, essay)
}

/// Validity prompt for one relation: the target quote fills `[content]`, the
/// relation's sources fill `[evidence]` and the essay follows the template.
pub fn validity_prompt(target: &str, evidence: &[&str], essay: &str) -> String {
    let evidence = serde_json::to_string(evidence).expect("strings serialize");
    let mut prompt = VALIDITY_TEMPLATE
        .replace("[content]", target)
        .replace("[evidence]", &evidence);
    prompt.push_str(essay);
    prompt
}

pub fn plan_prompt(evaluated: &EvaluatedAnalysis) -> String {
    let mut prompt = PLAN_TEMPLATE.to_string();
    prompt.push_str(&pretty(&evaluated.to_prompt_value()));
    prompt
}

/// System prompt for the dialogue, focused on `step`.
pub fn socratic_system(evaluated: &EvaluatedAnalysis, plan: &Plan, step: &PlanStep) -> String {
    let steps: Vec<Value> = plan
        .steps
        .iter()
        .map(|s| {
            serde_json::json!({
                "stepNumber": s.step_number,
                "description": s.description,
                "targetText": s.target_text,
                "issue": s.issue,
            })
        })
        .collect();
    let extension = SOCRATIC_EXTENSION
        .replace("{{PLAN}}", &pretty(&Value::Array(steps)))
        .replace("{{STEP_NUMBER}}", &step.step_number.to_string())
        .replace("{{STEP_TOTAL}}", &plan.steps.len().to_string())
        .replace("{{TARGET_TEXT}}", &step.target_text)
        .replace("{{ISSUE}}", &step.issue);
    let mut system = SOCRATIC_TEMPLATE.to_string();
    system.push_str(&pretty(&evaluated.to_prompt_value()));
    system.push('\n');
    system.push_str(&extension);
    system
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize")
}

//! Ordered revision plan: one step per flaw to discuss.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchoredSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanStep {
    pub step_number: u32,
    pub description: String,
    /// Verbatim quote that has the issue.
    pub target_text: String,
    pub issue: String,
    /// Index of the invalid relation the step addresses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchoredSpan>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, number: u32) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.step_number == number)
    }

    /// Renumbers steps 1..n in their current order.
    pub fn renumber(&mut self) {
        for (i, step) in self.steps.iter_mut().enumerate() {
            step.step_number = i as u32 + 1;
        }
    }

    pub fn is_contiguous(&self) -> bool {
        self.steps
            .iter()
            .enumerate()
            .all(|(i, s)| s.step_number as usize == i + 1)
    }
}

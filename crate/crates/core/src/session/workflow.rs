use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowStep {
    pub description: String,
    pub tool_name: String,
    pub status: StepStatus,
    /// Address of the stored result, for done steps.
    pub result_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub plan_id: String,
    pub steps: Vec<WorkflowStep>,
    pub created_at: DateTime<Utc>,
}

impl WorkflowState {
    pub fn new(plan_id: impl Into<String>, steps: impl IntoIterator<Item = (String, String)>) -> Self {
        WorkflowState {
            plan_id: plan_id.into(),
            steps: steps
                .into_iter()
                .map(|(description, tool_name)| WorkflowStep {
                    description,
                    tool_name,
                    status: StepStatus::Pending,
                    result_ref: None,
                })
                .collect(),
            created_at: Utc::now(),
        }
    }

    pub fn running(&self) -> Option<usize> {
        self.steps.iter().position(|s| s.status == StepStatus::Running)
    }

    /// Marks step `i` running. Refused while another step runs.
    pub fn start(&mut self, i: usize) -> bool {
        if self.running().is_some() || i >= self.steps.len() {
            return false;
        }
        self.steps[i].status = StepStatus::Running;
        true
    }

    pub fn finish(&mut self, i: usize, result_ref: Option<String>) {
        if let Some(s) = self.steps.get_mut(i) {
            s.status = StepStatus::Done;
            s.result_ref = result_ref;
        }
    }

    pub fn fail(&mut self, i: usize) {
        if let Some(s) = self.steps.get_mut(i) {
            s.status = StepStatus::Failed;
        }
    }

    pub fn is_complete(&self) -> bool {
        self.steps.iter().all(|s| s.status == StepStatus::Done)
    }
}

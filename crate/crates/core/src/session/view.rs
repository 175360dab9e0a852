use serde::{Deserialize, Serialize};

use super::{EndReason, EventBody, SessionEvent, StepOutcome};
use crate::classifier::Neighbor;
use crate::control::{Finger, GloveState};
use crate::Gesture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    #[default]
    Idle,
    Running,
    Paused,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub success: u32,
    pub mismatch: u32,
    pub timeout: u32,
}

impl Tally {
    pub fn record(&mut self, outcome: StepOutcome) {
        match outcome {
            StepOutcome::Success => self.success += 1,
            StepOutcome::Mismatch => self.mismatch += 1,
            StepOutcome::Timeout => self.timeout += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.success + self.mismatch + self.timeout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveInstruction {
    pub step: usize,
    pub repetition: u32,
    pub instruction: Gesture,
    pub fingers: Vec<Finger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastClassification {
    pub window: u64,
    pub label: Gesture,
    pub neighbors: Vec<Neighbor>,
}

/// Session state folded from the event stream. This is what a late-joining
/// observer receives as its snapshot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionView {
    pub status: SessionStatus,
    pub t_s: f64,
    pub last_seq: Option<u64>,
    pub instruction: Option<ActiveInstruction>,
    pub last_classification: Option<LastClassification>,
    pub glove: Option<GloveState>,
    pub tally: Tally,
    pub end_reason: Option<EndReason>,
}

impl SessionView {
    pub fn apply(&mut self, e: &SessionEvent) {
        self.t_s = e.t_s;
        self.last_seq = Some(e.seq);
        match &e.body {
            EventBody::InstructionShown {
                step,
                repetition,
                instruction,
                fingers,
                ..
            } => {
                if self.status == SessionStatus::Idle {
                    self.status = SessionStatus::Running;
                }
                self.instruction = Some(ActiveInstruction {
                    step: *step,
                    repetition: *repetition,
                    instruction: *instruction,
                    fingers: fingers.clone(),
                });
            }
            EventBody::Classified {
                window,
                label,
                neighbors,
                ..
            } => {
                self.last_classification = Some(LastClassification {
                    window: *window,
                    label: *label,
                    neighbors: neighbors.clone(),
                });
            }
            EventBody::GloveState { glove } => self.glove = Some(glove.clone()),
            EventBody::StepResult { outcome, .. } => {
                self.tally.record(*outcome);
                self.instruction = None;
            }
            EventBody::SessionEnd { reason, .. } => {
                self.status = SessionStatus::Ended;
                self.end_reason = Some(*reason);
                self.instruction = None;
            }
            EventBody::EmgFrame { .. }
            | EventBody::WindowDetected { .. }
            | EventBody::CommandIssued { .. } => {}
        }
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Self {
        let mut v = Self::default();
        for e in events {
            v.apply(e);
        }
        v
    }
}

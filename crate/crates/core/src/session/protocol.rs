use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::control::Finger;
use crate::Gesture;

pub const DEFAULT_TIMEOUT_S: f64 = 10.0;
pub const DEFAULT_REPETITIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub instruction: Gesture,
    pub fingers: Vec<Finger>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

/// Ordered instructions, repeated `repetitions` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub steps: Vec<ProtocolStep>,
    pub repetitions: u32,
}

impl Protocol {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Protocol(m));
        if self.steps.is_empty() {
            return bad("protocol has no steps".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive".into());
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.fingers.is_empty() {
                return bad(format!("step {i} has an empty finger set"));
            }
            if !(s.timeout_s.is_finite() && s.timeout_s > 0.0) {
                return bad(format!("step {i} timeout must be positive"));
            }
        }
        Ok(())
    }

    /// Grasp then release on each finger in turn, index to pinky.
    pub fn alternating(repetitions: u32, timeout_s: f64) -> Self {
        let steps = Finger::ALL
            .into_iter()
            .flat_map(|f| {
                Gesture::ALL.into_iter().map(move |g| ProtocolStep {
                    instruction: g,
                    fingers: vec![f],
                    timeout_s,
                })
            })
            .collect();
        Self { steps, repetitions }
    }

    /// A single step of `instruction` on `fingers`, repeated.
    pub fn single(instruction: Gesture, fingers: Vec<Finger>, repetitions: u32, timeout_s: f64) -> Self {
        Self {
            steps: vec![ProtocolStep {
                instruction,
                fingers,
                timeout_s,
            }],
            repetitions,
        }
    }

    /// Instructions in the order they are shown.
    pub fn instructions(&self) -> Vec<Gesture> {
        (0..self.total_steps())
            .map(|i| self.steps[self.locate(i).1].instruction)
            .collect()
    }

    /// Every step repeated `repetitions` times.
    pub fn total_steps(&self) -> usize {
        self.steps.len() * self.repetitions as usize
    }

    /// `(repetition, step)` for a flat step index.
    pub fn locate(&self, flat: usize) -> (u32, usize) {
        ((flat / self.steps.len()) as u32, flat % self.steps.len())
    }

    pub fn from_json(json: &str) -> Result<Self, SessionError> {
        let p: Self = serde_json::from_str(json).map_err(|e| SessionError::Protocol(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

impl Default for Protocol {
    fn default() -> Self {
        Self::alternating(DEFAULT_REPETITIONS, DEFAULT_TIMEOUT_S)
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The two hand intents the system distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gesture {
    Grasp,
    Release,
}

impl Gesture {
    pub const ALL: [Gesture; 2] = [Gesture::Grasp, Gesture::Release];

    /// Stable index used for confusion matrices and vote tallies.
    pub fn index(self) -> usize {
        match self {
            Gesture::Grasp => 0,
            Gesture::Release => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gesture::Grasp => "grasp",
            Gesture::Release => "release",
        }
    }
}

impl fmt::Display for Gesture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown gesture `{0}` (expected `grasp` or `release`)")]
pub struct ParseGestureError(pub String);

impl FromStr for Gesture {
    type Err = ParseGestureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grasp" => Ok(Gesture::Grasp),
            "release" => Ok(Gesture::Release),
            other => Err(ParseGestureError(other.to_string())),
        }
    }
}

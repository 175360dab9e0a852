//! Pneumatic glove controller.
//!
//! Each finger channel is a small state machine driven by a fixed-period
//! tick. Pressure moves toward its target by at most one rate-limit step per
//! tick and never leaves `[0, SAFETY_CEILING_KPA]`.

use serde::{Deserialize, Serialize};

use crate::actuator::{self, ActuatorSpec, ActuatorState, ActuatorVersion};
use crate::Gesture;

/// Hard pressure ceiling for every channel, kPa.
pub const SAFETY_CEILING_KPA: f64 = 250.0;
pub const DEFAULT_DT_S: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("finger set is empty")]
    EmptyFingerSet,
    #[error("finger `{0}` is not fitted on this glove")]
    UnknownFinger(Finger),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Actuator(#[from] actuator::ActuatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    /// The thumb is not actuated.
    pub const ALL: [Finger; 4] = [Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky];

    /// Shell segments fitted on each finger of the glove.
    pub fn segments(self) -> usize {
        match self {
            Finger::Middle => 10,
            Finger::Index | Finger::Ring => 9,
            Finger::Pinky => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }
}

impl std::fmt::Display for Finger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Finger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Finger::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown finger `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Pressurizing,
    Holding,
    Venting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerChannel {
    pub finger: Finger,
    pub spec: ActuatorSpec,
    pub current_pressure_kpa: f64,
    pub target_pressure_kpa: f64,
    pub phase: Phase,
}

impl FingerChannel {
    pub fn new(finger: Finger, spec: ActuatorSpec) -> Self {
        Self {
            finger,
            spec,
            current_pressure_kpa: 0.0,
            target_pressure_kpa: 0.0,
            phase: Phase::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTick {
    pub dt_s: f64,
    pub max_step_kpa: f64,
}

fn settled_phase(target: f64) -> Phase {
    if target > 0.0 {
        Phase::Holding
    } else {
        Phase::Idle
    }
}

/// One controller tick for a single channel.
pub fn step(channel: &FingerChannel, tick: &ControlTick) -> FingerChannel {
    let target = channel.target_pressure_kpa.clamp(0.0, SAFETY_CEILING_KPA);
    let current = channel.current_pressure_kpa;
    let gap = target - current;
    let (next, phase) = if gap.abs() <= tick.max_step_kpa {
        (target, settled_phase(target))
    } else if gap > 0.0 {
        (current + tick.max_step_kpa, Phase::Pressurizing)
    } else {
        (current - tick.max_step_kpa, Phase::Venting)
    };
    FingerChannel {
        current_pressure_kpa: next.clamp(0.0, SAFETY_CEILING_KPA),
        target_pressure_kpa: target,
        phase,
        ..channel.clone()
    }
}

/// Target pressure for an intent: full pressure on grasp, vent on release.
pub fn intent_target(spec: &ActuatorSpec, intent: Gesture, ceiling_kpa: f64) -> f64 {
    match intent {
        Gesture::Grasp => spec.max_pressure_kpa.min(ceiling_kpa).min(SAFETY_CEILING_KPA),
        Gesture::Release => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerTarget {
    pub finger: Finger,
    pub target_kpa: f64,
}

/// Sets targets on the addressed channels; other channels keep theirs.
pub fn command_from_intent(
    channels: &mut [FingerChannel],
    intent: Gesture,
    fingers: &[Finger],
    ceiling_kpa: f64,
) -> Result<Vec<FingerTarget>, ControlError> {
    if fingers.is_empty() {
        return Err(ControlError::EmptyFingerSet);
    }
    if let Some(f) = fingers.iter().find(|f| !channels.iter().any(|c| c.finger == **f)) {
        return Err(ControlError::UnknownFinger(*f));
    }
    let mut out = Vec::new();
    for ch in channels.iter_mut().filter(|c| fingers.contains(&c.finger)) {
        ch.target_pressure_kpa = intent_target(&ch.spec, intent, ceiling_kpa);
        out.push(FingerTarget {
            finger: ch.finger,
            target_kpa: ch.target_pressure_kpa,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxStep {
    pub v1: f64,
    pub v2: f64,
}

impl Default for MaxStep {
    fn default() -> Self {
        Self { v1: 20.0, v2: 5.0 }
    }
}

impl MaxStep {
    pub fn for_version(&self, version: ActuatorVersion) -> f64 {
        match version {
            ActuatorVersion::V1 => self.v1,
            ActuatorVersion::V2 => self.v2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerConfig {
    pub finger: Finger,
    pub spec: ActuatorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub dt_s: f64,
    pub max_step_kpa: MaxStep,
    pub ceiling_kpa: f64,
    pub fingers: Vec<FingerConfig>,
}

impl ControllerConfig {
    /// Four-finger glove built from one actuator version.
    pub fn glove(version: ActuatorVersion) -> Self {
        Self {
            dt_s: DEFAULT_DT_S,
            max_step_kpa: MaxStep::default(),
            ceiling_kpa: SAFETY_CEILING_KPA,
            fingers: Finger::ALL
                .into_iter()
                .map(|finger| FingerConfig {
                    finger,
                    spec: ActuatorSpec::default_for(version, finger.segments())
                        .expect("glove segment counts are valid"),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidConfig(m));
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad("dt_s must be positive".into());
        }
        for s in [self.max_step_kpa.v1, self.max_step_kpa.v2] {
            if !(s.is_finite() && s > 0.0) {
                return bad("max_step_kpa must be positive".into());
            }
        }
        if !(self.ceiling_kpa > 0.0 && self.ceiling_kpa <= SAFETY_CEILING_KPA) {
            return bad(format!("ceiling_kpa must lie in (0, {SAFETY_CEILING_KPA}]"));
        }
        if self.fingers.is_empty() {
            return bad("no fingers configured".into());
        }
        for (i, fc) in self.fingers.iter().enumerate() {
            if self.fingers[..i].iter().any(|o| o.finger == fc.finger) {
                return bad(format!("finger `{}` configured twice", fc.finger));
            }
            if fc.spec.n_segments != fc.finger.segments() {
                return bad(format!(
                    "finger `{}` carries {} segments, expected {}",
                    fc.finger,
                    fc.spec.n_segments,
                    fc.finger.segments()
                ));
            }
            fc.spec.validate()?;
        }
        Ok(())
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::glove(ActuatorVersion::V2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerState {
    pub finger: Finger,
    pub phase: Phase,
    pub pressure_kpa: f64,
    pub target_pressure_kpa: f64,
    /// Set when the channel pressure exceeds the actuator's characterised
    /// maximum and the model was evaluated at that maximum instead.
    pub clamped: bool,
    pub actuator: ActuatorState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveState {
    pub fingers: Vec<FingerState>,
}

/// Projects channel pressures through the actuator model.
pub fn glove_snapshot(channels: &[FingerChannel]) -> GloveState {
    GloveState {
        fingers: channels
            .iter()
            .map(|ch| {
                let max = ch.spec.max_pressure_kpa;
                let clamped = ch.current_pressure_kpa > max;
                let p = ch.current_pressure_kpa.clamp(0.0, max);
                FingerState {
                    finger: ch.finger,
                    phase: ch.phase,
                    pressure_kpa: ch.current_pressure_kpa,
                    target_pressure_kpa: ch.target_pressure_kpa,
                    clamped,
                    actuator: actuator::state(&ch.spec, p).expect("pressure clamped into range"),
                }
            })
            .collect(),
    }
}

/// The glove controller: all finger channels plus their shared tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Glove {
    config: ControllerConfig,
    channels: Vec<FingerChannel>,
}

impl Glove {
    pub fn new(config: ControllerConfig) -> Result<Self, ControlError> {
        config.validate()?;
        let channels = config
            .fingers
            .iter()
            .map(|fc| FingerChannel::new(fc.finger, fc.spec.clone()))
            .collect();
        Ok(Self { config, channels })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn channels(&self) -> &[FingerChannel] {
        &self.channels
    }

    pub fn dt_s(&self) -> f64 {
        self.config.dt_s
    }

    pub fn tick_for(&self, version: ActuatorVersion) -> ControlTick {
        ControlTick {
            dt_s: self.config.dt_s,
            max_step_kpa: self.config.max_step_kpa.for_version(version),
        }
    }

    pub fn command(&mut self, intent: Gesture, fingers: &[Finger]) -> Result<Vec<FingerTarget>, ControlError> {
        command_from_intent(&mut self.channels, intent, fingers, self.config.ceiling_kpa)
    }

    /// Advances every channel one tick. Returns true if any pressure or phase
    /// changed.
    pub fn tick(&mut self) -> bool {
        let mut changed = false;
        for i in 0..self.channels.len() {
            let tick = self.tick_for(self.channels[i].spec.version);
            let next = step(&self.channels[i], &tick);
            changed |= next != self.channels[i];
            self.channels[i] = next;
        }
        changed
    }

    pub fn is_settled(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.current_pressure_kpa == c.target_pressure_kpa)
    }

    pub fn snapshot(&self) -> GloveState {
        glove_snapshot(&self.channels)
    }
}

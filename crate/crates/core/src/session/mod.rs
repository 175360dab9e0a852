//! Rehabilitation session orchestration.
//!
//! A [`SessionRunner`] consumes samples one at a time and emits
//! [`SessionEvent`]s. Session time is the sample clock (seconds since the
//! first sample), so a run is a pure function of its inputs: the same source,
//! model, protocol and configs always produce the same event log, apart from
//! the measured prediction wall time.

mod log;
mod protocol;
mod view;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{KnnModel, Neighbor};
use crate::control::{ControlError, ControllerConfig, Finger, FingerTarget, Glove, GloveState};
use crate::features::{self, FeatureVector};
use crate::signal::{
    synth_sequence, GestureWindow, Sample, SegmentationConfig, Segmenter, SignalError, SynthConfig,
    SynthOutput,
};
use crate::Gesture;

pub use self::log::{
    decode_event, encode_event, read_log, replay, replay_paced, write_log, LogHeader, SessionLog,
    WIRE_VERSION,
};
pub use protocol::{Protocol, ProtocolStep, DEFAULT_REPETITIONS, DEFAULT_TIMEOUT_S};
pub use view::{SessionStatus, SessionView, Tally};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at event {index}: {message}")]
    CorruptLog { index: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Success,
    Mismatch,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    SourceExhausted,
    Abort,
    Error,
}

/// Kind-specific event payload. Serialised with a `type` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    InstructionShown {
        step: usize,
        repetition: u32,
        instruction: Gesture,
        fingers: Vec<Finger>,
        timeout_s: f64,
    },
    /// A batch of rectified samples for live display.
    EmgFrame {
        start_s: f64,
        sample_rate_hz: f64,
        values: Vec<f64>,
    },
    WindowDetected {
        window: u64,
        start_s: f64,
        end_s: f64,
        n_samples: usize,
    },
    Classified {
        window: u64,
        label: Gesture,
        features: FeatureVector,
        neighbors: Vec<Neighbor>,
        /// Wall-clock prediction time; the only non-deterministic field.
        predict_wall_s: f64,
    },
    CommandIssued {
        window: u64,
        intent: Gesture,
        targets: Vec<FingerTarget>,
    },
    GloveState {
        glove: GloveState,
    },
    StepResult {
        step: usize,
        repetition: u32,
        instruction: Gesture,
        outcome: StepOutcome,
        classified: Option<Gesture>,
    },
    SessionEnd {
        reason: EndReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::InstructionShown { .. } => "instruction_shown",
            EventBody::EmgFrame { .. } => "emg_frame",
            EventBody::WindowDetected { .. } => "window_detected",
            EventBody::Classified { .. } => "classified",
            EventBody::CommandIssued { .. } => "command_issued",
            EventBody::GloveState { .. } => "glove_state",
            EventBody::StepResult { .. } => "step_result",
            EventBody::SessionEnd { .. } => "session_end",
        }
    }
}

/// One log entry. `seq` is strictly increasing; `t_s` is non-decreasing
/// (several events can share a sample instant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_s: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub segmentation: SegmentationConfig,
    pub controller: ControllerConfig,
    /// Length of emitted EMG frames; 0 disables them.
    pub emg_frame_s: f64,
    /// Seed of the synthetic source, when there is one. Recorded only.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SessionConfig {
    pub const DEFAULT_EMG_FRAME_S: f64 = 0.05;

    pub fn new(segmentation: SegmentationConfig) -> Self {
        Self {
            segmentation,
            controller: ControllerConfig::default(),
            emg_frame_s: Self::DEFAULT_EMG_FRAME_S,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    NotStarted,
    /// Waiting on the step at this flat index.
    Step(usize),
    /// All steps resolved; letting the glove settle.
    Draining,
    Finished,
}

/// Incremental session engine.
#[derive(Debug)]
pub struct SessionRunner {
    model: Arc<KnnModel>,
    protocol: Protocol,
    cfg: SessionConfig,
    glove: Glove,
    segmenter: Option<Segmenter>,
    stage: Stage,
    t0: Option<f64>,
    last_t: f64,
    step_started: f64,
    ticks: u64,
    next_window: u64,
    seq: u64,
    frame: Vec<f64>,
    frame_start: f64,
    frame_len: usize,
    sample_rate_hz: Option<f64>,
}

impl SessionRunner {
    pub fn new(protocol: Protocol, model: Arc<KnnModel>, cfg: SessionConfig) -> Result<Self, SessionError> {
        protocol.validate()?;
        cfg.segmentation.validate()?;
        let glove = Glove::new(cfg.controller.clone())?;
        for step in &protocol.steps {
            if let Some(f) = step
                .fingers
                .iter()
                .find(|f| !glove.channels().iter().any(|c| c.finger == **f))
            {
                return Err(ControlError::UnknownFinger(*f).into());
            }
        }
        if !(cfg.emg_frame_s.is_finite() && cfg.emg_frame_s >= 0.0) {
            return Err(SessionError::Protocol("emg_frame_s must be non-negative".into()));
        }
        Ok(Self {
            model,
            protocol,
            cfg,
            glove,
            segmenter: None,
            stage: Stage::NotStarted,
            t0: None,
            last_t: 0.0,
            step_started: 0.0,
            ticks: 0,
            next_window: 0,
            seq: 0,
            frame: Vec::new(),
            frame_start: 0.0,
            frame_len: 0,
            sample_rate_hz: None,
        })
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Finished
    }

    pub fn glove(&self) -> &Glove {
        &self.glove
    }

    fn emit(&mut self, out: &mut Vec<SessionEvent>, t_s: f64, body: EventBody) {
        out.push(SessionEvent {
            seq: self.seq,
            t_s,
            body,
        });
        self.seq += 1;
    }

    /// Shows the first instruction. Must precede [`push_sample`](Self::push_sample).
    pub fn start(&mut self) -> Vec<SessionEvent> {
        let mut out = Vec::new();
        if self.stage == Stage::NotStarted {
            let glove = self.glove.snapshot();
            self.emit(&mut out, 0.0, EventBody::GloveState { glove });
            self.enter_step(0, 0.0, &mut out);
        }
        out
    }

    fn enter_step(&mut self, idx: usize, t: f64, out: &mut Vec<SessionEvent>) {
        if idx >= self.protocol.total_steps() {
            self.stage = Stage::Draining;
            self.maybe_finish(t, out);
            return;
        }
        let (repetition, step) = self.protocol.locate(idx);
        let s = &self.protocol.steps[step];
        let body = EventBody::InstructionShown {
            step,
            repetition,
            instruction: s.instruction,
            fingers: s.fingers.clone(),
            timeout_s: s.timeout_s,
        };
        self.stage = Stage::Step(idx);
        self.step_started = t;
        self.emit(out, t, body);
    }

    fn resolve_step(
        &mut self,
        idx: usize,
        t: f64,
        outcome: StepOutcome,
        classified: Option<Gesture>,
        out: &mut Vec<SessionEvent>,
    ) {
        let (repetition, step) = self.protocol.locate(idx);
        let instruction = self.protocol.steps[step].instruction;
        self.emit(
            out,
            t,
            EventBody::StepResult {
                step,
                repetition,
                instruction,
                outcome,
                classified,
            },
        );
        self.enter_step(idx + 1, t, out);
    }

    fn maybe_finish(&mut self, t: f64, out: &mut Vec<SessionEvent>) {
        if self.stage == Stage::Draining && self.glove.is_settled() {
            self.finish(t, EndReason::Completed, None, out);
        }
    }

    fn finish(&mut self, t: f64, reason: EndReason, detail: Option<String>, out: &mut Vec<SessionEvent>) {
        if self.stage == Stage::Finished {
            return;
        }
        self.flush_frame(out);
        self.stage = Stage::Finished;
        self.emit(out, t, EventBody::SessionEnd { reason, detail });
    }

    fn flush_frame(&mut self, out: &mut Vec<SessionEvent>) {
        if self.frame.is_empty() {
            return;
        }
        let values = std::mem::take(&mut self.frame);
        let body = EventBody::EmgFrame {
            start_s: self.frame_start,
            sample_rate_hz: self.sample_rate_hz.unwrap_or(0.0),
            values,
        };
        let t = self.last_t;
        self.emit(out, t, body);
    }

    /// Feeds one sample taken at a uniform rate of `sample_rate_hz`.
    pub fn push_sample(&mut self, sample: Sample, sample_rate_hz: f64) -> Vec<SessionEvent> {
        let mut out = Vec::new();
        if self.stage == Stage::NotStarted {
            out = self.start();
        }
        if self.stage == Stage::Finished {
            return out;
        }
        if self.segmenter.is_none() {
            match Segmenter::new(self.cfg.segmentation, sample_rate_hz) {
                Ok(s) => self.segmenter = Some(s),
                Err(e) => {
                    self.finish(0.0, EndReason::Error, Some(e.to_string()), &mut out);
                    return out;
                }
            }
            self.sample_rate_hz = Some(sample_rate_hz);
            self.frame_len = (self.cfg.emg_frame_s * sample_rate_hz).round() as usize;
        }
        let t0 = *self.t0.get_or_insert(sample.t);
        let t = sample.t - t0;
        self.last_t = t;
        let v = sample.v.abs();

        // Controller ticks that fall due at or before this sample.
        let dt = self.glove.dt_s();
        while (self.ticks as f64) * dt <= t {
            let tick_t = self.ticks as f64 * dt;
            self.ticks += 1;
            if self.glove.tick() {
                let glove = self.glove.snapshot();
                self.emit(&mut out, tick_t, EventBody::GloveState { glove });
            }
        }

        if self.frame_len > 0 {
            if self.frame.is_empty() {
                self.frame_start = t;
            }
            self.frame.push(v);
            if self.frame.len() >= self.frame_len {
                self.flush_frame(&mut out);
            }
        }

        let window = self
            .segmenter
            .as_mut()
            .expect("initialised above")
            .push(Sample::new(t, v));
        match window {
            Ok(Some(w)) => self.on_window(w, t, &mut out),
            Ok(None) => {}
            Err(e) => {
                self.finish(t, EndReason::Error, Some(e.to_string()), &mut out);
                return out;
            }
        }

        if let Stage::Step(idx) = self.stage {
            let (_, step) = self.protocol.locate(idx);
            if t - self.step_started >= self.protocol.steps[step].timeout_s {
                self.resolve_step(idx, t, StepOutcome::Timeout, None, &mut out);
            }
        }
        self.maybe_finish(t, &mut out);
        out
    }

    fn on_window(&mut self, w: GestureWindow, t: f64, out: &mut Vec<SessionEvent>) {
        let window = self.next_window;
        self.next_window += 1;
        self.emit(
            out,
            t,
            EventBody::WindowDetected {
                window,
                start_s: w.start_s(),
                end_s: w.end_s(),
                n_samples: w.len(),
            },
        );
        let features = features::extract(&w);
        let started = Instant::now();
        let prediction = self.model.predict(&features);
        let predict_wall_s = started.elapsed().as_secs_f64();
        let label = prediction.label;
        self.emit(
            out,
            t,
            EventBody::Classified {
                window,
                label,
                features,
                neighbors: prediction.neighbors,
                predict_wall_s,
            },
        );

        let Stage::Step(idx) = self.stage else {
            return;
        };
        let (_, step) = self.protocol.locate(idx);
        let instructed = self.protocol.steps[step].instruction;
        if label != instructed {
            self.resolve_step(idx, t, StepOutcome::Mismatch, Some(label), out);
            return;
        }
        let fingers = self.protocol.steps[step].fingers.clone();
        match self.glove.command(label, &fingers) {
            Ok(targets) => {
                self.emit(
                    out,
                    t,
                    EventBody::CommandIssued {
                        window,
                        intent: label,
                        targets,
                    },
                );
                self.resolve_step(idx, t, StepOutcome::Success, Some(label), out);
            }
            Err(e) => self.finish(t, EndReason::Error, Some(e.to_string()), out),
        }
    }

    /// The source ran dry.
    pub fn end_of_source(&mut self) -> Vec<SessionEvent> {
        let mut out = Vec::new();
        if self.stage == Stage::NotStarted {
            out = self.start();
        }
        let t = self.last_t;
        let reason = if self.stage == Stage::Draining {
            EndReason::Completed
        } else {
            EndReason::SourceExhausted
        };
        self.finish(t, reason, None, &mut out);
        out
    }

    pub fn abort(&mut self, detail: Option<String>) -> Vec<SessionEvent> {
        let mut out = Vec::new();
        let t = self.last_t;
        self.finish(t, EndReason::Abort, detail, &mut out);
        out
    }
}

/// Runs a complete session over `source`, a uniformly sampled signal at
/// `sample_rate_hz`.
pub fn run_session(
    protocol: &Protocol,
    source: impl IntoIterator<Item = Sample>,
    sample_rate_hz: f64,
    model: Arc<KnnModel>,
    cfg: &SessionConfig,
) -> Result<SessionLog, SessionError> {
    let header = LogHeader::new(&model, protocol, cfg);
    let mut runner = SessionRunner::new(protocol.clone(), model, cfg.clone())?;
    let mut events = runner.start();
    for s in source {
        events.extend(runner.push_sample(s, sample_rate_hz));
        if runner.is_finished() {
            break;
        }
    }
    if !runner.is_finished() {
        events.extend(runner.end_of_source());
    }
    Ok(SessionLog { header, events })
}

/// A synthetic user who performs every instruction of `protocol` in order,
/// one burst per step.
pub fn scripted_source(protocol: &Protocol, sample_rate_hz: f64, seed: u64, synth: &SynthConfig) -> SynthOutput {
    synth_sequence(&protocol.instructions(), sample_rate_hz, seed, synth)
}

//! Double-threshold gesture segmentation with hysteresis and hold-off.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{GestureWindow, Sample, SampleStream, SignalError, TIME_EPS_S};

/// Block length used when estimating the quiet baseline.
const BASELINE_BLOCK_S: f64 = 0.05;
/// Quantile of block MAVs taken as the quiet baseline.
const BASELINE_QUANTILE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub onset_threshold_mv: f64,
    pub offset_threshold_mv: f64,
    pub min_duration_s: f64,
    pub hold_off_s: f64,
    /// Length of the moving-average envelope the thresholds are compared
    /// against. Zero compares raw samples.
    #[serde(default = "default_smoothing")]
    pub smoothing_s: f64,
}

fn default_smoothing() -> f64 {
    SegmentationConfig::DEFAULT_SMOOTHING_S
}

impl SegmentationConfig {
    pub const ONSET_FACTOR: f64 = 3.0;
    pub const OFFSET_FACTOR: f64 = 1.5;
    pub const DEFAULT_MIN_DURATION_S: f64 = 0.2;
    pub const DEFAULT_HOLD_OFF_S: f64 = 0.1;
    pub const DEFAULT_SMOOTHING_S: f64 = 0.025;

    pub fn new(
        onset_threshold_mv: f64,
        offset_threshold_mv: f64,
        min_duration_s: f64,
        hold_off_s: f64,
    ) -> Result<Self, SignalError> {
        let cfg = Self {
            onset_threshold_mv,
            offset_threshold_mv,
            min_duration_s,
            hold_off_s,
            smoothing_s: Self::DEFAULT_SMOOTHING_S,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_smoothing(mut self, smoothing_s: f64) -> Result<Self, SignalError> {
        self.smoothing_s = smoothing_s;
        self.validate()?;
        Ok(self)
    }

    /// Default thresholds relative to a quiet-baseline MAV.
    pub fn from_baseline(baseline_mav_mv: f64) -> Result<Self, SignalError> {
        Self::new(
            Self::ONSET_FACTOR * baseline_mav_mv,
            Self::OFFSET_FACTOR * baseline_mav_mv,
            Self::DEFAULT_MIN_DURATION_S,
            Self::DEFAULT_HOLD_OFF_S,
        )
    }

    /// Default thresholds calibrated on the stream's own quiet baseline.
    pub fn calibrate(stream: &SampleStream) -> Result<Self, SignalError> {
        Self::from_baseline(quiet_baseline_mav(stream)?)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.onset_threshold_mv) || !finite_nonneg(self.offset_threshold_mv) {
            return Err(SignalError::Validation("thresholds must be non-negative".into()));
        }
        if self.offset_threshold_mv > self.onset_threshold_mv {
            return Err(SignalError::Validation(
                "offset threshold must not exceed onset threshold".into(),
            ));
        }
        if !(self.min_duration_s.is_finite() && self.min_duration_s > 0.0) {
            return Err(SignalError::Validation("min_duration_s must be positive".into()));
        }
        if !finite_nonneg(self.hold_off_s) || !finite_nonneg(self.smoothing_s) {
            return Err(SignalError::Validation(
                "hold_off_s and smoothing_s must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Estimates the MAV of the stream's quiet periods: the 20th percentile of
/// MAVs over consecutive 50 ms blocks.
pub fn quiet_baseline_mav(stream: &SampleStream) -> Result<f64, SignalError> {
    if stream.is_empty() {
        return Err(SignalError::Validation(
            "cannot estimate a baseline from an empty stream".into(),
        ));
    }
    let block = ((BASELINE_BLOCK_S * stream.sample_rate_hz()).round() as usize).max(2);
    let mut mavs: Vec<f64> = stream
        .samples()
        .chunks(block)
        .map(|c| c.iter().map(|s| s.v.abs()).sum::<f64>() / c.len() as f64)
        .collect();
    mavs.sort_by(f64::total_cmp);
    let idx = (BASELINE_QUANTILE * (mavs.len() - 1) as f64).floor() as usize;
    Ok(mavs[idx])
}

#[derive(Debug, Clone)]
enum State {
    Idle,
    Open {
        buf: Vec<Sample>,
        /// Index into `buf` of the last sample whose envelope was at or
        /// above the offset threshold.
        last_above: usize,
    },
}

/// Incremental segmenter: push rectified samples one at a time and collect
/// windows as they close.
#[derive(Debug, Clone)]
pub struct Segmenter {
    cfg: SegmentationConfig,
    history: VecDeque<f64>,
    history_len: usize,
    state: State,
}

impl Segmenter {
    pub fn new(cfg: SegmentationConfig, sample_rate_hz: f64) -> Result<Self, SignalError> {
        cfg.validate()?;
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::Validation("sample rate must be positive".into()));
        }
        let history_len = ((cfg.smoothing_s * sample_rate_hz).round() as usize).max(1);
        Ok(Self {
            cfg,
            history: VecDeque::with_capacity(history_len),
            history_len,
            state: State::Idle,
        })
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.cfg
    }

    /// True while a window is open.
    pub fn is_open(&self) -> bool {
        matches!(self.state, State::Open { .. })
    }

    fn envelope(&mut self, v: f64) -> f64 {
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(v);
        self.history.iter().sum::<f64>() / self.history.len() as f64
    }

    pub fn push(&mut self, sample: Sample) -> Result<Option<GestureWindow>, SignalError> {
        if !(sample.v >= 0.0) {
            return Err(SignalError::Precondition(format!(
                "unrectified sample v = {} at t = {}",
                sample.v, sample.t
            )));
        }
        let env = self.envelope(sample.v);
        match &mut self.state {
            State::Idle => {
                if env > self.cfg.onset_threshold_mv {
                    self.state = State::Open {
                        buf: vec![sample],
                        last_above: 0,
                    };
                }
                Ok(None)
            }
            State::Open { buf, last_above } => {
                buf.push(sample);
                if env >= self.cfg.offset_threshold_mv {
                    *last_above = buf.len() - 1;
                    return Ok(None);
                }
                if sample.t - buf[*last_above].t + TIME_EPS_S >= self.cfg.hold_off_s {
                    Ok(self.close())
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Closes any open window at end of input.
    pub fn finish(&mut self) -> Option<GestureWindow> {
        self.close()
    }

    fn close(&mut self) -> Option<GestureWindow> {
        let State::Open { mut buf, last_above } = std::mem::replace(&mut self.state, State::Idle)
        else {
            return None;
        };
        buf.truncate(last_above + 1);
        let duration = buf.last()?.t - buf.first()?.t;
        if buf.len() < 2 || duration + TIME_EPS_S < self.cfg.min_duration_s {
            return None;
        }
        GestureWindow::new(buf, None).ok()
    }
}

/// Cuts a rectified stream into disjoint, time-ordered gesture windows. The
/// stream's label hint, if any, is attached to every window.
pub fn segment_gestures(
    stream: &SampleStream,
    cfg: &SegmentationConfig,
) -> Result<Vec<GestureWindow>, SignalError> {
    if let Some(s) = stream.samples().iter().find(|s| s.v < 0.0) {
        return Err(SignalError::Precondition(format!(
            "stream is not rectified (v = {} at t = {})",
            s.v, s.t
        )));
    }
    let mut seg = Segmenter::new(*cfg, stream.sample_rate_hz())?;
    let mut out = Vec::new();
    for &s in stream.samples() {
        if let Some(w) = seg.push(s)? {
            out.push(w);
        }
    }
    out.extend(seg.finish());
    Ok(out
        .into_iter()
        .map(|w| w.with_label(stream.label_hint()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{rectify, synth_gesture_stream_with, SynthConfig};
    use crate::Gesture;
    use proptest::prelude::*;

    fn raw_cfg() -> SegmentationConfig {
        SegmentationConfig::new(0.5, 0.25, 0.2, 0.1)
            .unwrap()
            .with_smoothing(0.0)
            .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SegmentationConfig::new(1.0, 2.0, 0.2, 0.1).is_err());
        assert!(SegmentationConfig::new(1.0, 0.5, 0.0, 0.1).is_err());
        assert!(SegmentationConfig::new(-1.0, -2.0, 0.2, 0.1).is_err());
        let d = SegmentationConfig::from_baseline(0.1).unwrap();
        assert!((d.onset_threshold_mv - 0.3).abs() < 1e-15);
        assert!((d.offset_threshold_mv - 0.15).abs() < 1e-15);
        assert_eq!(d.min_duration_s, 0.2);
        assert_eq!(d.hold_off_s, 0.1);
    }

    #[test]
    fn all_zero_stream_has_no_windows() {
        let s = SampleStream::from_values(1000.0, 0.0, &vec![0.0; 3000], None).unwrap();
        assert!(segment_gestures(&s, &raw_cfg()).unwrap().is_empty());
        let cal = SegmentationConfig::calibrate(&s).unwrap();
        assert!(segment_gestures(&s, &cal).unwrap().is_empty());
    }

    #[test]
    fn rectangular_burst_gives_one_spanning_window() {
        // 1 s quiet, 0.5 s at 1 mV, 1 s quiet.
        let mut v = vec![0.0; 1000];
        v.extend(vec![1.0; 500]);
        v.extend(vec![0.0; 1000]);
        let s = SampleStream::from_values(1000.0, 0.0, &v, None).unwrap();
        let w = segment_gestures(&s, &raw_cfg()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 500);
        assert!((w[0].start_s() - 1.0).abs() < 1e-12);
        assert!((w[0].end_s() - 1.499).abs() < 1e-12);
    }

    #[test]
    fn short_burst_is_discarded() {
        let mut v = vec![0.0; 500];
        v.extend(vec![1.0; 100]);
        v.extend(vec![0.0; 500]);
        let s = SampleStream::from_values(1000.0, 0.0, &v, None).unwrap();
        assert!(segment_gestures(&s, &raw_cfg()).unwrap().is_empty());
    }

    #[test]
    fn gap_shorter_than_hold_off_does_not_split() {
        let mut v = vec![0.0; 500];
        v.extend(vec![1.0; 300]);
        v.extend(vec![0.0; 50]);
        v.extend(vec![1.0; 300]);
        v.extend(vec![0.0; 500]);
        let s = SampleStream::from_values(1000.0, 0.0, &v, None).unwrap();
        let w = segment_gestures(&s, &raw_cfg()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 650);
    }

    #[test]
    fn burst_running_off_the_end_is_closed() {
        let mut v = vec![0.0; 500];
        v.extend(vec![1.0; 400]);
        let s = SampleStream::from_values(1000.0, 0.0, &v, None).unwrap();
        let w = segment_gestures(&s, &raw_cfg()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 400);
    }

    #[test]
    fn unrectified_input_is_rejected() {
        let s = SampleStream::from_values(1000.0, 0.0, &[0.0, -1.0, 0.0], None).unwrap();
        assert!(matches!(
            segment_gestures(&s, &raw_cfg()),
            Err(SignalError::Precondition(_))
        ));
    }

    #[test]
    fn label_hint_propagates() {
        let mut v = vec![0.0; 100];
        v.extend(vec![1.0; 300]);
        v.extend(vec![0.0; 300]);
        let s = SampleStream::from_values(1000.0, 0.0, &v, Some(Gesture::Release)).unwrap();
        let w = segment_gestures(&s, &raw_cfg()).unwrap();
        assert_eq!(w[0].label(), Some(Gesture::Release));
    }

    #[test]
    fn synthetic_bursts_are_recovered_one_window_each() {
        for kind in Gesture::ALL {
            for seed in 0..20u64 {
                let out =
                    synth_gesture_stream_with(kind, 7, 1000.0, seed, &SynthConfig::default());
                let cfg = SegmentationConfig::calibrate(&out.stream).unwrap();
                let windows = segment_gestures(&out.stream, &cfg).unwrap();
                assert_eq!(windows.len(), out.bursts.len(), "kind {kind} seed {seed}");
                for (w, b) in windows.iter().zip(&out.bursts) {
                    assert!(
                        w.start_s() <= b.center_s && b.center_s <= w.end_s(),
                        "window [{}, {}] misses burst centre {}",
                        w.start_s(),
                        w.end_s(),
                        b.center_s
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn windows_are_disjoint_ordered_and_long_enough(
            values in prop::collection::vec(-2.0f64..2.0, 10..2000),
            onset in 0.2f64..1.5,
            ratio in 0.1f64..1.0,
            min_d in 0.001f64..0.05,
            hold in 0.0f64..0.02,
            smooth in 0.0f64..0.01,
        ) {
            let s = rectify(&SampleStream::from_values(1000.0, 0.0, &values, None).unwrap());
            let cfg = SegmentationConfig::new(onset, onset * ratio, min_d, hold)
                .unwrap()
                .with_smoothing(smooth)
                .unwrap();
            let windows = segment_gestures(&s, &cfg).unwrap();
            let (t0, t1) = s.span().unwrap();
            for w in &windows {
                prop_assert!(w.duration_s() + TIME_EPS_S >= min_d);
                prop_assert!(w.start_s() >= t0 && w.end_s() <= t1);
            }
            for pair in windows.windows(2) {
                prop_assert!(pair[0].end_s() < pair[1].start_s());
            }
        }
    }
}

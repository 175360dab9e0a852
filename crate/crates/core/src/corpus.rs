//! Labelled feature corpora built from sample streams.

use crate::classifier::LabeledSample;
use crate::features::{self, WaveformMode};
use crate::signal::{
    rectify, segment_gestures, synth_gesture_stream_with, SampleStream, SegmentationConfig,
    SignalError, SynthConfig,
};
use crate::Gesture;

/// Gesture counts of the reference protocol: each grasp-release gesture
/// yields one window per class.
pub const TRAIN_GESTURES: usize = 34;
pub const VALIDATION_GESTURES: usize = 16;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1000.0;

const VALIDATION_SEED_SALT: u64 = 0x5641_4c49_4441_5445;

/// Segments a labelled stream and extracts one sample per window. The
/// segmentation thresholds are calibrated on the stream unless given.
pub fn labeled_samples(
    stream: &SampleStream,
    label: Gesture,
    cfg: Option<&SegmentationConfig>,
    mode: WaveformMode,
) -> Result<Vec<LabeledSample>, SignalError> {
    let rectified = rectify(stream);
    let cfg = match cfg {
        Some(c) => *c,
        None => SegmentationConfig::calibrate(&rectified)?,
    };
    Ok(segment_gestures(&rectified, &cfg)?
        .iter()
        .map(|w| LabeledSample::new(features::extract_with(w, mode), label))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
}

/// Seed used for the validation streams of [`synthetic_corpus`].
pub fn validation_seed(seed: u64) -> u64 {
    seed ^ VALIDATION_SEED_SALT
}

/// Synthetic train/validation corpus: `train_gestures` bursts per class for
/// training and `validation_gestures` per class for validation, generated from
/// independent seeds.
pub fn synthetic_corpus(
    train_gestures: usize,
    validation_gestures: usize,
    sample_rate_hz: f64,
    seed: u64,
    synth: &SynthConfig,
) -> Result<Corpus, SignalError> {
    let build = |count: usize, seed: u64| -> Result<Vec<LabeledSample>, SignalError> {
        let mut out = Vec::with_capacity(2 * count);
        for kind in Gesture::ALL {
            let s = synth_gesture_stream_with(kind, count, sample_rate_hz, seed, synth).stream;
            out.extend(labeled_samples(&s, kind, None, WaveformMode::Amplitude)?);
        }
        Ok(out)
    };
    Ok(Corpus {
        train: build(train_gestures, seed)?,
        validation: build(validation_gestures, validation_seed(seed))?,
    })
}

/// The reference-sized corpus (34 training and 16 validation gestures).
pub fn protocol_corpus(seed: u64) -> Result<Corpus, SignalError> {
    synthetic_corpus(
        TRAIN_GESTURES,
        VALIDATION_GESTURES,
        DEFAULT_SAMPLE_RATE_HZ,
        seed,
        &SynthConfig::default(),
    )
}

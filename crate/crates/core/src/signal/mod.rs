//! sEMG sample streams.
//!
//! A [`SampleStream`] is a uniformly sampled sequence of `(t, v)` pairs in
//! seconds and millivolts. Streams are immutable once validated. The sensor
//! front end may already deliver a full-wave rectified signal; [`rectify`] is
//! idempotent so it is always safe to apply.

mod segment;
mod synth;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Gesture;

pub use segment::{quiet_baseline_mav, segment_gestures, SegmentationConfig, Segmenter};
pub use synth::{
    synth_gesture_stream, synth_gesture_stream_with, synth_sequence, BurstTruth, ClassProfile, SynthConfig,
    SynthOutput,
};

/// Slack allowed on time comparisons against configured durations.
pub(crate) const TIME_EPS_S: f64 = 1e-9;

/// Relative tolerance on the spacing of consecutive timestamps.
const SPACING_REL_TOL: f64 = 1e-9;

/// Maximum relative disagreement between an inferred and a declared rate.
const DECLARED_RATE_REL_TOL: f64 = 0.01;

pub const CSV_HEADER: [&str; 2] = ["time_s", "voltage_mv"];

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    /// Millivolts.
    pub v: f64,
}

impl Sample {
    pub fn new(t: f64, v: f64) -> Self {
        Self { t, v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    sample_rate_hz: f64,
    samples: Vec<Sample>,
    label_hint: Option<Gesture>,
}

impl SampleStream {
    /// Validates rate, finiteness, strict monotonicity and uniform spacing.
    pub fn new(
        sample_rate_hz: f64,
        samples: Vec<Sample>,
        label_hint: Option<Gesture>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::Validation(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.t.is_finite() || !s.v.is_finite()) {
            return Err(SignalError::Validation(format!("sample {i} is not finite")));
        }
        let period = 1.0 / sample_rate_hz;
        for (i, pair) in samples.windows(2).enumerate() {
            let dt = pair[1].t - pair[0].t;
            if dt <= 0.0 {
                return Err(SignalError::Validation(format!(
                    "timestamps not strictly increasing at sample {}",
                    i + 1
                )));
            }
            // Timestamps are stored as absolute times, so allow a few ulps of
            // the time value itself on top of the relative spacing tolerance.
            let ulps = 4.0 * f64::EPSILON * pair[0].t.abs().max(pair[1].t.abs());
            if (dt - period).abs() > SPACING_REL_TOL * period + ulps {
                return Err(SignalError::Validation(format!(
                    "non-uniform spacing at sample {}: dt = {dt} s, expected {period} s",
                    i + 1
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            samples,
            label_hint,
        })
    }

    /// Builds a stream from values sampled at `t_i = t0 + i / rate`.
    pub fn from_values(
        sample_rate_hz: f64,
        t0: f64,
        values: &[f64],
        label_hint: Option<Gesture>,
    ) -> Result<Self, SignalError> {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(t0 + i as f64 / sample_rate_hz, v))
            .collect();
        Self::new(sample_rate_hz, samples, label_hint)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn label_hint(&self) -> Option<Gesture> {
        self.label_hint
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span `(first, last)` of the stream, if non-empty.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.t, self.samples.last()?.t))
    }

    pub fn is_rectified(&self) -> bool {
        self.samples.iter().all(|s| s.v >= 0.0)
    }

    pub fn with_label_hint(mut self, label: Option<Gesture>) -> Self {
        self.label_hint = label;
        self
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// Writes the stream in the `time_s,voltage_mv` CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SignalError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(CSV_HEADER).map_err(csv_io)?;
        for s in &self.samples {
            w.write_record([s.t.to_string(), s.v.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<(), SignalError> {
        let file = File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_io(e: csv::Error) -> SignalError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SignalError::Io(io),
        other => SignalError::Validation(format!("csv write failed: {other:?}")),
    }
}

/// Reads a `time_s,voltage_mv` CSV file, inferring the sampling rate from the
/// median inter-sample spacing.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<SampleStream, SignalError> {
    ingest_csv_with_rate(path, None)
}

/// Like [`ingest_csv`], additionally rejecting files whose inferred rate
/// differs from `declared_rate_hz` by more than 1%.
pub fn ingest_csv_with_rate(
    path: impl AsRef<Path>,
    declared_rate_hz: Option<f64>,
) -> Result<SampleStream, SignalError> {
    let file = File::open(path)?;
    read_csv(file, declared_rate_hz)
}

/// Parses CSV content from any reader. See [`ingest_csv_with_rate`].
pub fn read_csv<R: Read>(
    reader: R,
    declared_rate_hz: Option<f64>,
) -> Result<SampleStream, SignalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_parse(e, 1))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(SignalError::Validation("empty file".into()));
    }
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(SignalError::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_parse(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64, SignalError> {
            let raw = record.get(i).unwrap_or_default();
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| SignalError::Parse {
                    line,
                    message: format!("invalid {name} `{raw}`"),
                })
        };
        samples.push(Sample::new(field(0, "time")?, field(1, "voltage")?));
        lines.push(line);
    }

    if samples.is_empty() {
        return Err(SignalError::Validation("file contains no samples".into()));
    }
    if samples.len() < 2 {
        return Err(SignalError::Validation(
            "at least two samples are needed to infer the sampling rate".into(),
        ));
    }
    let mut spacings = Vec::with_capacity(samples.len() - 1);
    for (i, pair) in samples.windows(2).enumerate() {
        let dt = pair[1].t - pair[0].t;
        if dt <= 0.0 {
            return Err(SignalError::Validation(format!(
                "time not strictly increasing on line {}",
                lines[i + 1]
            )));
        }
        spacings.push(dt);
    }
    spacings.sort_by(f64::total_cmp);
    let mid = spacings.len() / 2;
    let median = if spacings.len() % 2 == 0 {
        0.5 * (spacings[mid - 1] + spacings[mid])
    } else {
        spacings[mid]
    };
    let rate = 1.0 / median;
    if let Some(declared) = declared_rate_hz {
        if ((rate - declared) / declared).abs() > DECLARED_RATE_REL_TOL {
            return Err(SignalError::Validation(format!(
                "inferred sample rate {rate:.6} Hz disagrees with declared {declared} Hz"
            )));
        }
    }
    SampleStream::new(rate, samples, None)
}

fn csv_parse(e: csv::Error, fallback_line: u64) -> SignalError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SignalError::Io(io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => SignalError::Parse {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => SignalError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Full-wave rectification: `v -> |v|`, timestamps untouched.
pub fn rectify(stream: &SampleStream) -> SampleStream {
    SampleStream {
        sample_rate_hz: stream.sample_rate_hz,
        samples: stream
            .samples
            .iter()
            .map(|s| Sample::new(s.t, s.v.abs()))
            .collect(),
        label_hint: stream.label_hint,
    }
}

/// A contiguous run of rectified samples covering one gesture phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureWindow {
    samples: Vec<Sample>,
    #[serde(default)]
    label: Option<Gesture>,
}

impl GestureWindow {
    /// Requires at least two samples, all with `v >= 0`.
    pub fn new(samples: Vec<Sample>, label: Option<Gesture>) -> Result<Self, SignalError> {
        if samples.len() < 2 {
            return Err(SignalError::Precondition(format!(
                "a gesture window needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !(s.v >= 0.0) || !s.v.is_finite()) {
            return Err(SignalError::Precondition(format!(
                "window sample {i} is negative or not finite; rectify first"
            )));
        }
        Ok(Self { samples, label })
    }

    /// Convenience for tests and tools: values at uniform spacing from `t0`.
    pub fn from_values(
        values: &[f64],
        sample_rate_hz: f64,
        label: Option<Gesture>,
    ) -> Result<Self, SignalError> {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(i as f64 / sample_rate_hz, v))
            .collect();
        Self::new(samples, label)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + Clone + '_ {
        self.samples.iter().map(|s| s.v)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false: windows hold at least two samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label(&self) -> Option<Gesture> {
        self.label
    }

    pub fn with_label(mut self, label: Option<Gesture>) -> Self {
        self.label = label;
        self
    }

    pub fn start_s(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_s(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s() - self.start_s()
    }
}

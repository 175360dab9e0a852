//! Time-domain sEMG features.
//!
//! Five features are computed per gesture window, in a fixed order:
//! integrated EMG, mean absolute value, simple square integral, maximum
//! amplitude and waveform length. Sums are compensated so batch and
//! single-pass results agree to within a few ulps on long windows.

use serde::{Deserialize, Serialize};

use crate::signal::GestureWindow;

pub const FEATURE_NAMES: [&str; 5] = ["iemg", "mav", "ssi", "max", "wl"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Integrated EMG, mV·samples.
    pub iemg: f64,
    /// Mean absolute value, mV.
    pub mav: f64,
    /// Simple square integral, mV²·samples.
    pub ssi: f64,
    /// Maximum amplitude, mV.
    pub max: f64,
    /// Waveform length, mV (amplitude mode) or s (literal mode).
    pub wl: f64,
}

impl FeatureVector {
    pub fn new(iemg: f64, mav: f64, ssi: f64, max: f64, wl: f64) -> Self {
        Self {
            iemg,
            mav,
            ssi,
            max,
            wl,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.iemg, self.mav, self.ssi, self.max, self.wl]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// How waveform length is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformMode {
    /// Σ |V[i+1] − V[i]|, in mV.
    #[default]
    Amplitude,
    /// Σ |t[i+1] − t[i]|, in s. For uniform sampling this is just the window
    /// duration.
    Literal,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    values
        .fold(CompensatedSum::default(), |mut acc, x| {
            acc.add(x);
            acc
        })
        .value()
}

/// x1 = Σ V[i].
pub fn iemg(w: &GestureWindow) -> f64 {
    compensated_sum(w.values())
}

/// x2 = (1/N) Σ |V[i]|.
pub fn mav(w: &GestureWindow) -> f64 {
    compensated_sum(w.values().map(f64::abs)) / w.len() as f64
}

/// x3 = Σ |V[i]|².
pub fn ssi(w: &GestureWindow) -> f64 {
    compensated_sum(w.values().map(|v| v * v))
}

/// x4 = max |V[i]|.
pub fn max_amp(w: &GestureWindow) -> f64 {
    w.values().map(f64::abs).fold(0.0, f64::max)
}

/// x5, in the requested mode. Windows always hold two or more samples.
pub fn waveform_length(w: &GestureWindow, mode: WaveformMode) -> f64 {
    let s = w.samples();
    match mode {
        WaveformMode::Amplitude => compensated_sum(s.windows(2).map(|p| (p[1].v - p[0].v).abs())),
        WaveformMode::Literal => compensated_sum(s.windows(2).map(|p| (p[1].t - p[0].t).abs())),
    }
}

/// All five features with amplitude-mode waveform length.
pub fn extract(w: &GestureWindow) -> FeatureVector {
    extract_with(w, WaveformMode::Amplitude)
}

pub fn extract_with(w: &GestureWindow, mode: WaveformMode) -> FeatureVector {
    FeatureVector::new(iemg(w), mav(w), ssi(w), max_amp(w), waveform_length(w, mode))
}

/// Single-pass feature computation over a stream of rectified samples.
#[derive(Debug, Clone, Default)]
pub struct FeatureAccumulator {
    mode: WaveformMode,
    n: usize,
    sum: CompensatedSum,
    abs_sum: CompensatedSum,
    sq_sum: CompensatedSum,
    max: f64,
    wl: CompensatedSum,
    prev: Option<(f64, f64)>,
}

impl FeatureAccumulator {
    pub fn new(mode: WaveformMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.n += 1;
        self.sum.add(v);
        self.abs_sum.add(v.abs());
        self.sq_sum.add(v * v);
        self.max = self.max.max(v.abs());
        if let Some((pt, pv)) = self.prev {
            self.wl.add(match self.mode {
                WaveformMode::Amplitude => (v - pv).abs(),
                WaveformMode::Literal => (t - pt).abs(),
            });
        }
        self.prev = Some((t, v));
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// `None` until at least two samples have been pushed.
    pub fn finish(&self) -> Option<FeatureVector> {
        (self.n >= 2).then(|| {
            FeatureVector::new(
                self.sum.value(),
                self.abs_sum.value() / self.n as f64,
                self.sq_sum.value(),
                self.max,
                self.wl.value(),
            )
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("cannot fit a scaler on an empty training set")]
    EmptyTrainingSet,
}

/// Per-component z-score using training mean and (population) standard
/// deviation. Components with zero variance pass through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

impl Scaler {
    pub fn fit(train: &[FeatureVector]) -> Result<Self, FeatureError> {
        if train.is_empty() {
            return Err(FeatureError::EmptyTrainingSet);
        }
        let n = train.len() as f64;
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for i in 0..5 {
            mean[i] = compensated_sum(train.iter().map(|f| f.to_array()[i])) / n;
            let var = compensated_sum(train.iter().map(|f| {
                let d = f.to_array()[i] - mean[i];
                d * d
            })) / n;
            std[i] = var.sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &FeatureVector) -> FeatureVector {
        let a = x.to_array();
        let mut out = [0.0; 5];
        for i in 0..5 {
            out[i] = if self.std[i] > 0.0 {
                (a[i] - self.mean[i]) / self.std[i]
            } else {
                a[i]
            };
        }
        FeatureVector::from_array(out)
    }
}

/// Fits a [`Scaler`] on the training vectors.
pub fn standardize(train: &[FeatureVector]) -> Result<Scaler, FeatureError> {
    Scaler::fit(train)
}

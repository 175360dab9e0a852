//! Seeded synthetic sEMG: Gaussian-envelope bursts of white noise on a quiet
//! noise floor, rectified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Sample, SampleStream};
use crate::Gesture;

/// Envelope amplitude and width of one gesture class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Peak envelope standard deviation of the carrier noise, mV.
    pub amplitude_mv: f64,
    /// Standard deviation of the Gaussian envelope, s.
    pub width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Class separation. 0 makes grasp and release statistically identical;
    /// grasp bursts grow louder and longer as it increases.
    pub separation: f64,
    /// Release-class profile; grasp is derived from it via the gains below.
    pub release: ClassProfile,
    pub amplitude_gain: f64,
    pub width_gain: f64,
    /// Log-normal spread of per-burst amplitude and width.
    pub amplitude_jitter: f64,
    pub width_jitter: f64,
    pub noise_floor_mv: f64,
    pub lead_s: f64,
    pub gap_s: f64,
    pub gap_jitter_s: f64,
    pub tail_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            separation: 1.5,
            release: ClassProfile {
                amplitude_mv: 0.8,
                width_s: 0.12,
            },
            amplitude_gain: 0.6,
            width_gain: 0.4,
            amplitude_jitter: 0.25,
            width_jitter: 0.2,
            noise_floor_mv: 0.02,
            lead_s: 1.0,
            gap_s: 1.0,
            gap_jitter_s: 0.5,
            tail_s: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn profile(&self, kind: Gesture) -> ClassProfile {
        match kind {
            Gesture::Release => self.release,
            Gesture::Grasp => ClassProfile {
                amplitude_mv: self.release.amplitude_mv * (1.0 + self.amplitude_gain * self.separation),
                width_s: self.release.width_s * (1.0 + self.width_gain * self.separation),
            },
        }
    }
}

/// Ground truth for one generated burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstTruth {
    pub kind: Gesture,
    pub center_s: f64,
    pub width_s: f64,
    pub amplitude_mv: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub stream: SampleStream,
    pub bursts: Vec<BurstTruth>,
}

/// Bursts never extend past this many envelope widths from their centre.
const ENVELOPE_SUPPORT: f64 = 5.0;
/// Spacing between neighbouring burst centres, in envelope widths, before the gap.
const BURST_HALF_SPAN: f64 = 3.0;
/// Per-burst jitter draws are truncated at this many standard deviations.
const JITTER_CLIP: f64 = 2.5;

const SEQUENCE_SALT: u64 = 0x7365_7175_656e_6365;

fn kind_salt(kind: Gesture) -> u64 {
    match kind {
        Gesture::Grasp => 0x6772_6173_7000_0001,
        Gesture::Release => 0x7265_6c65_6173_0002,
    }
}

/// `count` bursts of `kind` with the default generator settings.
pub fn synth_gesture_stream(kind: Gesture, count: usize, sample_rate_hz: f64, seed: u64) -> SampleStream {
    synth_gesture_stream_with(kind, count, sample_rate_hz, seed, &SynthConfig::default()).stream
}

/// Deterministic for fixed arguments: the RNG is seeded from `seed` and `kind`.
pub fn synth_gesture_stream_with(
    kind: Gesture,
    count: usize,
    sample_rate_hz: f64,
    seed: u64,
    cfg: &SynthConfig,
) -> SynthOutput {
    assert!(count >= 1, "burst count must be at least 1");
    let rng = ChaCha8Rng::seed_from_u64(seed ^ kind_salt(kind));
    generate(&vec![kind; count], sample_rate_hz, rng, cfg, Some(kind))
}

/// Bursts of mixed kinds in the given order, e.g. a scripted exercise. The
/// stream carries no label hint.
pub fn synth_sequence(kinds: &[Gesture], sample_rate_hz: f64, seed: u64, cfg: &SynthConfig) -> SynthOutput {
    let rng = ChaCha8Rng::seed_from_u64(seed ^ SEQUENCE_SALT);
    generate(kinds, sample_rate_hz, rng, cfg, None)
}

fn generate(
    kinds: &[Gesture],
    sample_rate_hz: f64,
    mut rng: ChaCha8Rng,
    cfg: &SynthConfig,
    label_hint: Option<Gesture>,
) -> SynthOutput {
    assert!(
        sample_rate_hz.is_finite() && sample_rate_hz > 0.0,
        "sample rate must be positive"
    );
    let clipped = |rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z.clamp(-JITTER_CLIP, JITTER_CLIP)
    };

    let mut bursts = Vec::with_capacity(kinds.len());
    let mut cursor = cfg.lead_s;
    for &kind in kinds {
        let profile = cfg.profile(kind);
        let amplitude_mv = profile.amplitude_mv * (cfg.amplitude_jitter * clipped(&mut rng)).exp();
        let width_s = profile.width_s * (cfg.width_jitter * clipped(&mut rng)).exp();
        let center_s = cursor + BURST_HALF_SPAN * width_s;
        bursts.push(BurstTruth {
            kind,
            center_s,
            width_s,
            amplitude_mv,
        });
        let gap = cfg.gap_s + cfg.gap_jitter_s * rng.random::<f64>();
        cursor = center_s + BURST_HALF_SPAN * width_s + gap;
    }
    let end_s = bursts
        .last()
        .map_or(cfg.lead_s, |b| b.center_s + BURST_HALF_SPAN * b.width_s)
        + cfg.tail_s;

    let n = (end_s * sample_rate_hz).ceil() as usize;
    let mut samples = Vec::with_capacity(n);
    let mut next_burst = 0;
    for i in 0..n {
        let t = i as f64 / sample_rate_hz;
        while next_burst < bursts.len()
            && t > bursts[next_burst].center_s + ENVELOPE_SUPPORT * bursts[next_burst].width_s
        {
            next_burst += 1;
        }
        let envelope: f64 = bursts[next_burst..]
            .iter()
            .take_while(|b| t >= b.center_s - ENVELOPE_SUPPORT * b.width_s)
            .map(|b| {
                let z = (t - b.center_s) / b.width_s;
                b.amplitude_mv * (-0.5 * z * z).exp()
            })
            .sum();
        let floor: f64 = rng.sample(StandardNormal);
        let carrier: f64 = rng.sample(StandardNormal);
        let v = (cfg.noise_floor_mv * floor + envelope * carrier).abs();
        samples.push(Sample::new(t, v));
    }

    let stream = SampleStream::new(sample_rate_hz, samples, label_hint)
        .expect("generator emits uniformly spaced finite samples");
    SynthOutput { stream, bursts }
}

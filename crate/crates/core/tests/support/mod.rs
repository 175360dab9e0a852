//! Reference implementations used as test oracles. Deliberately naive and
//! written without reference to the library internals.

#![allow(dead_code)]

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Normal};

use rehab_core::classifier::LabeledSample;
use rehab_core::features::FeatureVector;
use rehab_core::Gesture;

/// Sum of `xs` accurate to within an ulp or so, via exact partials.
pub fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let mut hi = 0.0;
    while let Some(p) = partials.pop() {
        let x = hi;
        hi = x + p;
        let lo = p - (hi - x);
        if lo != 0.0 {
            partials.push(lo);
            hi += partials.iter().sum::<f64>();
            break;
        }
    }
    hi
}

/// `v * v` as an unevaluated pair `hi + lo`.
fn exact_square(v: f64) -> [f64; 2] {
    let hi = v * v;
    [hi, v.mul_add(v, -hi)]
}

/// `|b - a|` as an unevaluated pair.
fn exact_abs_diff(a: f64, b: f64) -> [f64; 2] {
    let hi = b - a;
    let bv = hi - b;
    let av = hi - bv;
    let lo = (b - av) + (-a - bv);
    if hi < 0.0 || (hi == 0.0 && lo < 0.0) {
        [-hi, -lo]
    } else {
        [hi, lo]
    }
}

/// `[iemg, mav, ssi, max, wl]` of a rectified window, amplitude waveform length.
pub fn features(values: &[f64]) -> [f64; 5] {
    let n = values.len() as f64;
    let iemg = exact_sum(values.iter().copied());
    let mav = exact_sum(values.iter().map(|v| v.abs())) / n;
    let ssi = exact_sum(values.iter().flat_map(|&v| exact_square(v)));
    let mut sorted = values.iter().map(|v| v.abs()).collect::<Vec<_>>();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().unwrap();
    let wl = exact_sum(values.windows(2).flat_map(|p| exact_abs_diff(p[0], p[1])));
    [iemg, mav, ssi, max, wl]
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// Rectified test window of length `n` drawn from one of several shapes
/// (flat noise, heavy tails, sparse spikes, constant, a burst).
pub fn random_window(rng: &mut impl RngCore, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    match rng.random_range(0..5) {
        0 => (0..n).map(|_| scale * rng.random::<f64>()).collect(),
        1 => {
            let e = Exp::new(1.0).unwrap();
            (0..n).map(|_| scale * e.sample(rng)).collect()
        }
        2 => (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    scale * rng.random::<f64>()
                } else {
                    0.0
                }
            })
            .collect(),
        3 => vec![scale * rng.random::<f64>(); n],
        _ => {
            let noise = Normal::new(0.0, 1.0).unwrap();
            let center = n as f64 * rng.random::<f64>();
            let width = (n as f64 / 8.0).max(1.0);
            (0..n)
                .map(|i| {
                    let env = (-0.5 * ((i as f64 - center) / width).powi(2)).exp();
                    (scale * env * noise.sample(rng)).abs()
                })
                .collect()
        }
    }
}

/// Window length in `[2, max_n]`, biased toward short windows so both ends
/// of the range are exercised.
pub fn random_len(rng: &mut impl RngCore, max_n: usize) -> usize {
    if rng.random_bool(0.2) {
        rng.random_range(2..=16)
    } else {
        rng.random_range(2..=max_n)
    }
}

fn euclid(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    let mut s = 0.0;
    for i in 0..5 {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Exhaustive-scan KNN. Every point tied with the k-th smallest distance
/// votes; a split vote goes to the class with the smaller mean distance among
/// its voters, and to grasp if those are equal too.
pub fn knn_label(train: &[([f64; 5], Gesture)], query: &[f64; 5], k: usize) -> Gesture {
    let dists: Vec<(f64, Gesture)> = train.iter().map(|(f, l)| (euclid(f, query), *l)).collect();
    let mut sorted: Vec<f64> = dists.iter().map(|d| d.0).collect();
    sorted.sort_by(f64::total_cmp);
    let kth = sorted[k - 1];

    let mut grasp = Vec::new();
    let mut release = Vec::new();
    for (d, l) in dists {
        if d <= kth {
            match l {
                Gesture::Grasp => grasp.push(d),
                Gesture::Release => release.push(d),
            }
        }
    }
    if grasp.len() != release.len() {
        return if grasp.len() > release.len() {
            Gesture::Grasp
        } else {
            Gesture::Release
        };
    }
    grasp.sort_by(f64::total_cmp);
    release.sort_by(f64::total_cmp);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if mean(&release) < mean(&grasp) {
        Gesture::Release
    } else {
        Gesture::Grasp
    }
}

/// A random two-class training set of at most `max_n` samples plus a query.
/// Half the cases use small integer coordinates so distance ties are common.
pub fn random_knn_case(rng: &mut impl RngCore, max_n: usize) -> (Vec<LabeledSample>, usize, FeatureVector) {
    let n = rng.random_range(2..=max_n);
    let integer = rng.random_bool(0.5);
    let coord = |rng: &mut dyn RngCore| -> f64 {
        if integer {
            rng.random_range(0..4) as f64
        } else {
            rng.random_range(-5.0..5.0)
        }
    };
    let mut samples: Vec<LabeledSample> = (0..n)
        .map(|_| {
            let f = FeatureVector::from_array(std::array::from_fn(|_| coord(rng)));
            let l = if rng.random_bool(0.5) {
                Gesture::Grasp
            } else {
                Gesture::Release
            };
            LabeledSample::new(f, l)
        })
        .collect();
    // Both classes must be present.
    samples[0].label = Gesture::Grasp;
    samples[1].label = Gesture::Release;
    let max_k = if n % 2 == 0 { n - 1 } else { n };
    let k = 2 * rng.random_range(0..=(max_k.min(15) - 1) / 2) + 1;
    let query = FeatureVector::from_array(std::array::from_fn(|_| coord(rng)));
    (samples, k, query)
}

/// Tip of a chain of `n` links of length `link` with every joint at `theta_deg`,
/// from the closed-form sum of a geometric series of rotations.
pub fn closed_form_tip(n: usize, theta_deg: f64, link: f64) -> (f64, f64) {
    let th = theta_deg.to_radians();
    if th.abs() < 1e-12 {
        return (n as f64 * link, 0.0);
    }
    let nf = n as f64;
    let r = link * (nf * th / 2.0).sin() / (th / 2.0).sin();
    let phi = (nf + 1.0) * th / 2.0;
    (r * phi.cos(), r * phi.sin())
}

/// Twice the signed area of the triangle through three points.
pub fn cross(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

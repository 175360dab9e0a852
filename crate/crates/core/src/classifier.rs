//! K-nearest-neighbour gesture classifier.
//!
//! The model is lazy: it keeps the labelled training vectors and scans all of
//! them per query using plain Euclidean distance over the five features.
//! Training sets are a few dozen samples, so an exhaustive scan is both exact
//! and fast.
//!
//! Tie handling is independent of the order of the training list: every
//! sample tied with the k-th nearest distance joins the vote, a split vote
//! goes to the class whose voting neighbours are nearer on average, and an
//! exact tie on that too falls back to [`Gesture::Grasp`].

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, Scaler};
use crate::Gesture;

pub const MODEL_FILE_VERSION: u32 = 1;

/// Neighbour counts swept in the evaluation table.
pub const STANDARD_KS: [usize; 5] = [1, 3, 5, 7, 9];

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set only contains `{0}` samples; both classes are required")]
    SingleClass(Gesture),
    #[error("k must be a positive odd integer, got {0}")]
    InvalidK(usize),
    #[error("k = {k} exceeds the number of training samples ({n})")]
    KExceedsSamples { k: usize, n: usize },
    #[error("training sample {0} has non-finite features")]
    NonFinite(usize),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Gesture,
}

impl LabeledSample {
    pub fn new(features: FeatureVector, label: Gesture) -> Self {
        Self { features, label }
    }
}

/// Euclidean distance over all five feature components.
pub fn distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Index into the model's training list.
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Gesture,
    /// Voting neighbours, ascending by distance. May hold more than k entries
    /// when several samples tie with the k-th distance.
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    k: usize,
    scaler: Option<Scaler>,
    samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    samples: Vec<LabeledSample>,
    k: usize,
    scaler: Option<Scaler>,
    /// Training features after scaling, parallel to `samples`.
    prepared: Vec<FeatureVector>,
}

/// Fits a model. KNN is lazy, so fitting only validates and stores.
pub fn fit(samples: Vec<LabeledSample>, k: usize, use_scaler: bool) -> Result<KnnModel, ClassifierError> {
    let scaler = if use_scaler && !samples.is_empty() {
        let features: Vec<FeatureVector> = samples.iter().map(|s| s.features).collect();
        Some(Scaler::fit(&features).expect("non-empty"))
    } else {
        None
    };
    KnnModel::from_parts(samples, k, scaler)
}

impl KnnModel {
    fn from_parts(
        samples: Vec<LabeledSample>,
        k: usize,
        scaler: Option<Scaler>,
    ) -> Result<Self, ClassifierError> {
        if samples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        if let Some(i) = samples.iter().position(|s| !s.features.is_finite()) {
            return Err(ClassifierError::NonFinite(i));
        }
        let first = samples[0].label;
        if samples.iter().all(|s| s.label == first) {
            return Err(ClassifierError::SingleClass(first));
        }
        if k == 0 || k % 2 == 0 {
            return Err(ClassifierError::InvalidK(k));
        }
        if k > samples.len() {
            return Err(ClassifierError::KExceedsSamples {
                k,
                n: samples.len(),
            });
        }
        if !STANDARD_KS.contains(&k) {
            log::info!("k = {k} is outside the standard sweep {STANDARD_KS:?}");
        }
        let prepared = samples
            .iter()
            .map(|s| match &scaler {
                Some(sc) => sc.apply(&s.features),
                None => s.features,
            })
            .collect();
        Ok(Self {
            samples,
            k,
            scaler,
            prepared,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    /// Same training data and scaling with a different neighbour count.
    pub fn with_k(&self, k: usize) -> Result<Self, ClassifierError> {
        Self::from_parts(self.samples.clone(), k, self.scaler)
    }

    pub fn predict(&self, x: &FeatureVector) -> Prediction {
        let query = match &self.scaler {
            Some(sc) => sc.apply(x),
            None => *x,
        };
        let mut ranked: Vec<(f64, Gesture, usize)> = self
            .prepared
            .iter()
            .zip(&self.samples)
            .enumerate()
            .map(|(i, (f, s))| (distance(&query, f), s.label, i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let kth = ranked[self.k - 1].0;
        let voters = ranked.partition_point(|r| r.0.total_cmp(&kth).is_le());
        let mut counts = [0usize; 2];
        let mut dist_sums = [0.0f64; 2];
        for &(d, label, _) in &ranked[..voters] {
            counts[label.index()] += 1;
            dist_sums[label.index()] += d;
        }
        let label = match counts[0].cmp(&counts[1]) {
            std::cmp::Ordering::Greater => Gesture::Grasp,
            std::cmp::Ordering::Less => Gesture::Release,
            // Equal counts, so comparing sums compares means.
            std::cmp::Ordering::Equal => {
                if dist_sums[1] < dist_sums[0] {
                    Gesture::Release
                } else {
                    Gesture::Grasp
                }
            }
        };
        let neighbors = ranked[..voters]
            .iter()
            .map(|&(distance, _, index)| Neighbor { index, distance })
            .collect();
        Prediction { label, neighbors }
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            k: self.k,
            scaler: self.scaler,
            samples: self.samples.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(ClassifierError::UnsupportedVersion(file.version));
        }
        Self::from_parts(file.samples, file.k, file.scaler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub accuracy_pct: f64,
    pub mean_predict_time_s: f64,
    /// Rows are the true class, columns the predicted class, both in
    /// `[grasp, release]` order.
    pub confusion: [[u32; 2]; 2],
}

impl EvalReport {
    pub fn total(&self) -> u32 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u32 {
        self.confusion[0][0] + self.confusion[1][1]
    }
}

/// Accuracy over the validation set plus mean wall-clock time per prediction.
pub fn evaluate(model: &KnnModel, validation: &[LabeledSample]) -> Result<EvalReport, ClassifierError> {
    if validation.is_empty() {
        return Err(ClassifierError::EmptyValidation);
    }
    let mut confusion = [[0u32; 2]; 2];
    let mut elapsed = 0.0;
    for s in validation {
        let start = Instant::now();
        let p = model.predict(&s.features);
        elapsed += start.elapsed().as_secs_f64();
        confusion[s.label.index()][p.label.index()] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    Ok(EvalReport {
        k: model.k,
        accuracy_pct: 100.0 * f64::from(correct) / validation.len() as f64,
        mean_predict_time_s: elapsed / validation.len() as f64,
        confusion,
    })
}

/// Evaluates the model's training data at each neighbour count in `ks`.
pub fn k_sweep(
    model: &KnnModel,
    validation: &[LabeledSample],
    ks: &[usize],
) -> Result<Vec<EvalReport>, ClassifierError> {
    ks.iter()
        .map(|&k| evaluate(&model.with_k(k)?, validation))
        .collect()
}

/// Text table with one row per report: K, CPU time per prediction, accuracy.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:>14} {:>13}", "", "CPU time (s)", "Accuracy (%)");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<6} {:>14.6} {:>13.1}",
            format!("K={}", r.k),
            r.mean_predict_time_s,
            r.accuracy_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(x: f64) -> FeatureVector {
        FeatureVector::from_array([x; 5])
    }

    fn two_point_model(k: usize) -> KnnModel {
        fit(
            vec![
                LabeledSample::new(fv(0.0), Gesture::Grasp),
                LabeledSample::new(fv(10.0), Gesture::Release),
            ],
            k,
            false,
        )
        .unwrap()
    }

    #[test]
    fn fit_validation() {
        assert!(matches!(fit(vec![], 1, false), Err(ClassifierError::EmptyTrainingSet)));
        let grasp_only = vec![LabeledSample::new(fv(1.0), Gesture::Grasp); 10];
        assert!(matches!(
            fit(grasp_only, 1, false),
            Err(ClassifierError::SingleClass(Gesture::Grasp))
        ));
        let m = two_point_model(1);
        assert!(matches!(m.with_k(2), Err(ClassifierError::InvalidK(2))));
        assert!(matches!(m.with_k(0), Err(ClassifierError::InvalidK(0))));
        assert!(matches!(
            m.with_k(3),
            Err(ClassifierError::KExceedsSamples { k: 3, n: 2 })
        ));
        let nan = vec![
            LabeledSample::new(fv(f64::NAN), Gesture::Grasp),
            LabeledSample::new(fv(1.0), Gesture::Release),
        ];
        assert!(matches!(fit(nan, 1, false), Err(ClassifierError::NonFinite(0))));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&fv(3.0), &fv(3.0)), 0.0);
        let a = FeatureVector::default();
        let b = FeatureVector::new(3.0, 4.0, 0.0, 0.0, 0.0);
        assert_eq!(distance(&a, &b), 5.0);
        assert_eq!(distance(&b, &a), 5.0);
    }

    #[test]
    fn nearer_point_wins() {
        let m = two_point_model(1);
        let p = m.predict(&fv(1.0));
        assert_eq!(p.label, Gesture::Grasp);
        assert_eq!(p.neighbors.len(), 1);
        assert_eq!(p.neighbors[0].index, 0);
        assert_eq!(m.predict(&fv(10.0)).label, Gesture::Release);
    }

    #[test]
    fn boundary_ties_join_the_vote() {
        // Query at 0: one release at distance 1, two grasps tied at distance 2.
        // k = 1 would pick release; k = 3 includes both grasps.
        let samples = vec![
            LabeledSample::new(fv(1.0 / 5f64.sqrt()), Gesture::Release),
            LabeledSample::new(FeatureVector::new(2.0, 0.0, 0.0, 0.0, 0.0), Gesture::Grasp),
            LabeledSample::new(FeatureVector::new(0.0, 2.0, 0.0, 0.0, 0.0), Gesture::Grasp),
            LabeledSample::new(FeatureVector::new(0.0, 0.0, 2.0, 0.0, 0.0), Gesture::Release),
        ];
        let m = fit(samples.clone(), 1, false).unwrap();
        let p = m.predict(&FeatureVector::default());
        assert_eq!(p.label, Gesture::Release);

        // k = 3: the three samples at distance 2 all tie with the 3rd
        // neighbour, so four vote: 2 grasp vs 2 release. Mean distances are
        // grasp 2.0 and release 1.5, so release wins.
        let m3 = m.with_k(3).unwrap();
        let p3 = m3.predict(&FeatureVector::default());
        assert_eq!(p3.neighbors.len(), 4);
        assert_eq!(p3.label, Gesture::Release);
        for pair in p3.neighbors.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
    }

    #[test]
    fn exact_vote_and_distance_tie_falls_back_to_grasp() {
        let samples = vec![
            LabeledSample::new(FeatureVector::new(1.0, 0.0, 0.0, 0.0, 0.0), Gesture::Release),
            LabeledSample::new(FeatureVector::new(-1.0, 0.0, 0.0, 0.0, 0.0), Gesture::Grasp),
        ];
        let m = fit(samples, 1, false).unwrap();
        let p = m.predict(&FeatureVector::default());
        assert_eq!(p.neighbors.len(), 2);
        assert_eq!(p.label, Gesture::Grasp);
    }

    #[test]
    fn self_classification_with_k1_is_exact() {
        let samples: Vec<LabeledSample> = (0..30)
            .map(|i| {
                let label = if i % 3 == 0 { Gesture::Release } else { Gesture::Grasp };
                LabeledSample::new(
                    FeatureVector::new(i as f64, (i * 7 % 11) as f64, 1.0, 2.0, (i % 4) as f64),
                    label,
                )
            })
            .collect();
        let m = fit(samples.clone(), 1, false).unwrap();
        let r = evaluate(&m, &samples).unwrap();
        assert_eq!(r.accuracy_pct, 100.0);
        assert_eq!(r.total(), 30);
    }

    #[test]
    fn evaluate_fills_confusion_matrix() {
        let m = two_point_model(1);
        let validation = vec![
            LabeledSample::new(fv(1.0), Gesture::Grasp),
            LabeledSample::new(fv(9.0), Gesture::Release),
            LabeledSample::new(fv(8.0), Gesture::Grasp),
            LabeledSample::new(fv(2.0), Gesture::Grasp),
        ];
        let r = evaluate(&m, &validation).unwrap();
        assert_eq!(r.confusion, [[2, 1], [0, 1]]);
        assert_eq!(r.accuracy_pct, 75.0);
        assert!(r.mean_predict_time_s >= 0.0);
        assert!(matches!(evaluate(&m, &[]), Err(ClassifierError::EmptyValidation)));
    }

    #[test]
    fn model_json_round_trip() {
        let m = fit(
            vec![
                LabeledSample::new(FeatureVector::new(1.0, 2.0, 3.0, 4.0, 5.0), Gesture::Grasp),
                LabeledSample::new(FeatureVector::new(0.5, 0.1, 0.2, 0.3, 0.4), Gesture::Release),
                LabeledSample::new(FeatureVector::new(2.0, 2.0, 2.0, 2.0, 2.0), Gesture::Release),
            ],
            3,
            true,
        )
        .unwrap();
        let json = m.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["k"], 3);
        assert!(v["scaler"].is_object());
        assert_eq!(v["samples"][0]["label"], "grasp");
        assert_eq!(v["samples"][0]["features"]["iemg"], 1.0);
        let back = KnnModel::from_json(&json).unwrap();
        assert_eq!(back, m);

        let unscaled = two_point_model(1).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&unscaled).unwrap();
        assert!(v["scaler"].is_null());

        let bad = json.replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            KnnModel::from_json(&bad),
            Err(ClassifierError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn table_has_one_row_per_k() {
        let m = two_point_model(1);
        let validation = vec![LabeledSample::new(fv(1.0), Gesture::Grasp)];
        let reports = k_sweep(&m, &validation, &[1]).unwrap();
        let table = format_table(&reports);
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().starts_with("K=1"));
    }
}

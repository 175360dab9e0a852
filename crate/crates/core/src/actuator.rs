//! Quasi-static forward model of the rigid-shell / soft-chamber hybrid
//! bending actuator.
//!
//! Pressure maps to tip force through a monotone piecewise-linear anchor
//! table, and to a uniform per-joint bend angle that saturates at the shell's
//! joint limit. The shell chain is treated as a planar serial linkage of
//! equal rigid links with the clamped proximal end at the origin.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActuatorError {
    #[error("pressure {pressure_kpa} kPa outside [0, {max_kpa}] kPa")]
    PressureOutOfRange { pressure_kpa: f64, max_kpa: f64 },
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("invalid actuator spec: {0}")]
    InvalidSpec(String),
    #[error("actuator config: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorVersion {
    V1,
    V2,
}

impl ActuatorVersion {
    /// Segment counts covered by the bench characterisation.
    pub fn characterized_segments(self) -> std::ops::RangeInclusive<usize> {
        match self {
            ActuatorVersion::V1 => 2..=10,
            ActuatorVersion::V2 => 7..=12,
        }
    }

    pub fn max_pressure_kpa(self) -> f64 {
        match self {
            ActuatorVersion::V1 => 230.0,
            ActuatorVersion::V2 => 190.0,
        }
    }

    /// Default tip-force anchors `(kPa, N)`. The final point of each table is
    /// a linear extrapolation of the measured anchor.
    pub fn default_force_anchors(self) -> Vec<(f64, f64)> {
        match self {
            ActuatorVersion::V1 => vec![(0.0, 0.0), (210.0, 2.5), (230.0, 2.7)],
            ActuatorVersion::V2 => vec![(0.0, 0.0), (180.0, 3.5), (190.0, 3.7)],
        }
    }

    /// Gain placing joint saturation exactly at the maximum pressure.
    pub fn default_bend_gain(self) -> f64 {
        DEFAULT_JOINT_LIMIT_DEG / self.max_pressure_kpa()
    }

    /// V1 bends clockwise (−y), V2 anticlockwise (+y).
    pub fn bend_sign(self) -> f64 {
        match self {
            ActuatorVersion::V1 => -1.0,
            ActuatorVersion::V2 => 1.0,
        }
    }

    pub fn default_segments(self) -> usize {
        *self.characterized_segments().end()
    }
}

impl std::str::FromStr for ActuatorVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(ActuatorVersion::V1),
            "v2" | "2" => Ok(ActuatorVersion::V2),
            other => Err(format!("unknown actuator version `{other}` (expected v1 or v2)")),
        }
    }
}

pub const DEFAULT_SEGMENT_LENGTH_MM: f64 = 8.0;
pub const DEFAULT_JOINT_LIMIT_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    pub version: ActuatorVersion,
    pub n_segments: usize,
    pub segment_length_mm: f64,
    pub joint_limit_deg: f64,
    pub max_pressure_kpa: f64,
    pub force_anchors: Vec<(f64, f64)>,
    pub bend_gain_deg_per_kpa: f64,
    /// Set when part of the anchor table is extrapolated rather than measured.
    #[serde(default)]
    pub anchors_estimated: bool,
}

impl ActuatorSpec {
    pub fn default_for(version: ActuatorVersion, n_segments: usize) -> Result<Self, ActuatorError> {
        let spec = Self {
            version,
            n_segments,
            segment_length_mm: DEFAULT_SEGMENT_LENGTH_MM,
            joint_limit_deg: DEFAULT_JOINT_LIMIT_DEG,
            max_pressure_kpa: version.max_pressure_kpa(),
            force_anchors: version.default_force_anchors(),
            bend_gain_deg_per_kpa: version.default_bend_gain(),
            anchors_estimated: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_segments(&self, n_segments: usize) -> Result<Self, ActuatorError> {
        let spec = Self {
            n_segments,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        let bad = |m: String| Err(ActuatorError::InvalidSpec(m));
        if self.n_segments < 2 {
            return bad(format!("n_segments must be at least 2, got {}", self.n_segments));
        }
        if !(self.segment_length_mm.is_finite() && self.segment_length_mm > 0.0) {
            return bad("segment_length_mm must be positive".into());
        }
        if !(self.joint_limit_deg > 0.0 && self.joint_limit_deg <= 90.0) {
            return bad(format!("joint_limit_deg must lie in (0, 90], got {}", self.joint_limit_deg));
        }
        if !(self.max_pressure_kpa.is_finite() && self.max_pressure_kpa > 0.0) {
            return bad("max_pressure_kpa must be positive".into());
        }
        if !(self.bend_gain_deg_per_kpa.is_finite() && self.bend_gain_deg_per_kpa > 0.0) {
            return bad("bend_gain_deg_per_kpa must be positive".into());
        }
        check_anchors(&self.force_anchors).map_err(|e| match e {
            ActuatorError::Calibration(m) => ActuatorError::InvalidSpec(m),
            other => other,
        })
    }

    /// False when the segment count lies outside the characterised range;
    /// results are then extrapolations.
    pub fn is_characterized(&self) -> bool {
        self.version.characterized_segments().contains(&self.n_segments)
    }

    pub fn chain_length_mm(&self) -> f64 {
        self.n_segments as f64 * self.segment_length_mm
    }

    fn check_pressure(&self, pressure_kpa: f64) -> Result<(), ActuatorError> {
        if pressure_kpa >= 0.0 && pressure_kpa <= self.max_pressure_kpa {
            Ok(())
        } else {
            Err(ActuatorError::PressureOutOfRange {
                pressure_kpa,
                max_kpa: self.max_pressure_kpa,
            })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    pub fn from_json(json: &str) -> Result<Self, ActuatorError> {
        let spec: Self = serde_json::from_str(json).map_err(|e| ActuatorError::Json(e.to_string()))?;
        spec.validate()?;
        if !spec.is_characterized() {
            log::warn!(
                "{:?} actuator with {} segments is outside the characterised range {:?}",
                spec.version,
                spec.n_segments,
                spec.version.characterized_segments()
            );
        }
        Ok(spec)
    }
}

fn check_anchors(anchors: &[(f64, f64)]) -> Result<(), ActuatorError> {
    let bad = |m: &str| Err(ActuatorError::Calibration(m.to_string()));
    if anchors.len() < 2 {
        return bad("at least two force anchors are required");
    }
    if anchors[0] != (0.0, 0.0) {
        return bad("force anchors must start at (0, 0)");
    }
    if anchors.iter().any(|(p, f)| !p.is_finite() || !f.is_finite()) {
        return bad("force anchors must be finite");
    }
    for pair in anchors.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return bad("anchor pressures must be strictly increasing");
        }
        if pair[1].1 < pair[0].1 {
            return bad("anchor forces must be non-decreasing");
        }
    }
    Ok(())
}

/// Builds a spec for `version` from measured `(kPa, N)` anchors, with the
/// version's default geometry and largest characterised segment count.
pub fn calibrate(version: ActuatorVersion, anchors: &[(f64, f64)]) -> Result<ActuatorSpec, ActuatorError> {
    check_anchors(anchors)?;
    let mut spec = ActuatorSpec::default_for(version, version.default_segments())?;
    spec.force_anchors = anchors.to_vec();
    spec.anchors_estimated = false;
    Ok(spec)
}

/// Tip force in newtons. Interpolates linearly between anchors and continues
/// the last anchor segment's slope up to the maximum pressure. Independent of
/// the segment count.
pub fn tip_force(spec: &ActuatorSpec, pressure_kpa: f64) -> Result<f64, ActuatorError> {
    spec.check_pressure(pressure_kpa)?;
    let a = &spec.force_anchors;
    let seg = a
        .windows(2)
        .find(|w| pressure_kpa <= w[1].0)
        .unwrap_or(&a[a.len() - 2..]);
    let ((p0, f0), (p1, f1)) = (seg[0], seg[1]);
    if pressure_kpa == p1 {
        return Ok(f1);
    }
    Ok(f0 + (f1 - f0) * (pressure_kpa - p0) / (p1 - p0))
}

/// Per-joint bend in degrees, identical for every joint.
pub fn joint_angle_deg(spec: &ActuatorSpec, pressure_kpa: f64) -> Result<f64, ActuatorError> {
    spec.check_pressure(pressure_kpa)?;
    Ok((spec.bend_gain_deg_per_kpa * pressure_kpa).min(spec.joint_limit_deg))
}

pub fn bend_angles(spec: &ActuatorSpec, pressure_kpa: f64) -> Result<Vec<f64>, ActuatorError> {
    Ok(vec![joint_angle_deg(spec, pressure_kpa)?; spec.n_segments])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x_mm: f64,
    pub y_mm: f64,
}

/// Vertices of a planar chain of equal links: link `i` points along the sum
/// of the first `i + 1` joint angles (degrees, counter-clockwise positive).
pub fn chain_points(joint_angles_deg: &[f64], link_mm: f64) -> Vec<Point> {
    let mut pts = Vec::with_capacity(joint_angles_deg.len() + 1);
    let (mut x, mut y, mut heading) = (0.0f64, 0.0f64, 0.0f64);
    pts.push(Point { x_mm: x, y_mm: y });
    for a in joint_angles_deg {
        heading += a.to_radians();
        x += link_mm * heading.cos();
        y += link_mm * heading.sin();
        pts.push(Point { x_mm: x, y_mm: y });
    }
    pts
}

/// Bending trajectory: `n_segments + 1` vertices from the clamped origin.
pub fn trajectory(spec: &ActuatorSpec, pressure_kpa: f64) -> Result<Vec<Point>, ActuatorError> {
    let sign = spec.version.bend_sign();
    let signed: Vec<f64> = bend_angles(spec, pressure_kpa)?
        .into_iter()
        .map(|a| sign * a)
        .collect();
    Ok(chain_points(&signed, spec.segment_length_mm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub pressure_kpa: f64,
    pub joint_angles_deg: Vec<f64>,
    pub tip_force_n: f64,
    pub tip_position_mm: Point,
    pub points: Vec<Point>,
}

pub fn state(spec: &ActuatorSpec, pressure_kpa: f64) -> Result<ActuatorState, ActuatorError> {
    let points = trajectory(spec, pressure_kpa)?;
    Ok(ActuatorState {
        pressure_kpa,
        joint_angles_deg: bend_angles(spec, pressure_kpa)?,
        tip_force_n: tip_force(spec, pressure_kpa)?,
        tip_position_mm: *points.last().expect("at least two points"),
        points,
    })
}

/// Sum of link lengths along a polyline.
pub fn polyline_length(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|p| (p[1].x_mm - p[0].x_mm).hypot(p[1].y_mm - p[0].y_mm))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActuatorVersion::{V1, V2};

    fn spec(v: ActuatorVersion, n: usize) -> ActuatorSpec {
        ActuatorSpec::default_for(v, n).unwrap()
    }

    #[test]
    fn anchors_are_reproduced() {
        assert_eq!(tip_force(&spec(V1, 10), 0.0).unwrap(), 0.0);
        assert_eq!(tip_force(&spec(V1, 10), 210.0).unwrap(), 2.5);
        assert_eq!(tip_force(&spec(V2, 12), 180.0).unwrap(), 3.5);
        assert_eq!(tip_force(&spec(V2, 12), 190.0).unwrap(), 3.7);
        assert_eq!(tip_force(&spec(V1, 10), 230.0).unwrap(), 2.7);
    }

    #[test]
    fn pressure_range_is_enforced() {
        let s = spec(V2, 8);
        assert!(matches!(
            tip_force(&s, 190.5),
            Err(ActuatorError::PressureOutOfRange { .. })
        ));
        assert!(tip_force(&s, -1.0).is_err());
        assert!(bend_angles(&s, f64::NAN).is_err());
        assert!(trajectory(&s, 250.0).is_err());
    }

    #[test]
    fn force_ignores_segment_count() {
        for p in [0.0, 33.3, 150.0, 229.0] {
            assert_eq!(
                tip_force(&spec(V1, 3), p).unwrap(),
                tip_force(&spec(V1, 10), p).unwrap()
            );
        }
    }

    #[test]
    fn calibrate_linear_midpoint() {
        let s = calibrate(V1, &[(0.0, 0.0), (210.0, 2.5)]).unwrap();
        assert_eq!(s.version, V1);
        assert!(!s.anchors_estimated);
        assert!((tip_force(&s, 105.0).unwrap() - 1.25).abs() < 1e-15);
        // Beyond the last anchor the final slope continues.
        assert!((tip_force(&s, 230.0).unwrap() - 2.5 * 230.0 / 210.0).abs() < 1e-12);
    }

    #[test]
    fn calibrate_rejects_bad_tables() {
        let err = |a: &[(f64, f64)]| calibrate(V2, a).unwrap_err();
        assert!(matches!(err(&[(0.0, 0.0), (100.0, 2.0), (150.0, 1.0)]), ActuatorError::Calibration(_)));
        assert!(matches!(err(&[(10.0, 0.0), (100.0, 2.0)]), ActuatorError::Calibration(_)));
        assert!(matches!(err(&[(0.0, 0.0), (100.0, 2.0), (100.0, 2.5)]), ActuatorError::Calibration(_)));
        assert!(matches!(err(&[(0.0, 0.0)]), ActuatorError::Calibration(_)));
    }

    #[test]
    fn zero_pressure_is_straight() {
        let pts = trajectory(&spec(V1, 10), 0.0).unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0], Point { x_mm: 0.0, y_mm: 0.0 });
        assert!(pts.iter().all(|p| p.y_mm == 0.0));
        assert_eq!(pts[10].x_mm, 80.0);
    }

    #[test]
    fn saturation_at_max_pressure() {
        for v in [V1, V2] {
            let s = spec(v, 9);
            let angles = bend_angles(&s, s.max_pressure_kpa).unwrap();
            assert!(angles.iter().all(|&a| a == 45.0), "{v:?}: {angles:?}");
        }
    }

    #[test]
    fn bend_direction_follows_version() {
        let v1 = trajectory(&spec(V1, 8), 100.0).unwrap();
        let v2 = trajectory(&spec(V2, 8), 100.0).unwrap();
        assert!(v1.last().unwrap().y_mm < 0.0);
        assert!(v2.last().unwrap().y_mm > 0.0);
    }

    #[test]
    fn characterised_ranges() {
        assert!(spec(V1, 2).is_characterized());
        assert!(!spec(V1, 11).is_characterized());
        assert!(!spec(V2, 6).is_characterized());
        assert!(spec(V2, 12).is_characterized());
        assert!(ActuatorSpec::default_for(V2, 1).is_err());
    }

    #[test]
    fn state_collects_model_outputs() {
        let s = spec(V2, 10);
        let st = state(&s, 190.0).unwrap();
        assert_eq!(st.joint_angles_deg, vec![45.0; 10]);
        assert_eq!(st.tip_force_n, 3.7);
        assert_eq!(st.points.len(), 11);
        assert_eq!(st.tip_position_mm, st.points[10]);
    }

    #[test]
    fn config_json_round_trip() {
        let s = spec(V2, 9);
        let json = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["version"], "v2");
        assert_eq!(v["anchors_estimated"], true);
        assert_eq!(v["force_anchors"][1][0], 180.0);
        assert_eq!(ActuatorSpec::from_json(&json).unwrap(), s);
        let broken = json.replace("\"joint_limit_deg\": 45.0", "\"joint_limit_deg\": 120.0");
        assert!(matches!(ActuatorSpec::from_json(&broken), Err(ActuatorError::InvalidSpec(_))));
    }
}

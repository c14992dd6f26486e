//! Core domain types: state vectors, detections, labeled scenes, and
//! the dataset variants derived from them.
//!
//! A scene is one monitored target vehicle observed for a fixed span at
//! a constant sampling interval. Per timestamp it carries a 5-feature
//! kinematic state (range, speed, acceleration magnitudes, signed lane
//! offset, wrapped relative yaw) and optionally a 2D bounding box in a
//! 960x540 pixel frame.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Pixel frame the detections live in.
pub const IMAGE_WIDTH: f64 = 960.0;
pub const IMAGE_HEIGHT: f64 = 540.0;

/// Timestamps in a full-length scene from the reference corpus.
pub const FULL_SCENE_LEN: usize = 120;

/// Wraps an angle into [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = theta.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// Kinematic state of the target relative to the observer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// Distance to the target, meters, >= 0.
    pub range_m: f64,
    /// Relative speed magnitude, m/s, >= 0.
    pub speed_mps: f64,
    /// Relative acceleration magnitude, m/s^2, >= 0.
    pub accel_mps2: f64,
    /// Signed lateral offset from lane center, meters.
    pub lane_offset_m: f64,
    /// Relative yaw, radians, in [-pi, pi].
    pub yaw_rad: f64,
}

impl StateVector {
    pub fn as_array(&self) -> [f64; 5] {
        [self.range_m, self.speed_mps, self.accel_mps2, self.lane_offset_m, self.yaw_rad]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        StateVector {
            range_m: a[0],
            speed_mps: a[1],
            accel_mps2: a[2],
            lane_offset_m: a[3],
            yaw_rad: a[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("range_m", self.range_m),
            ("speed_mps", self.speed_mps),
            ("accel_mps2", self.accel_mps2),
            ("lane_offset_m", self.lane_offset_m),
            ("yaw_rad", self.yaw_rad),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::non_finite(format!("state field {name}")));
            }
        }
        for (name, v) in [
            ("range_m", self.range_m),
            ("speed_mps", self.speed_mps),
            ("accel_mps2", self.accel_mps2),
        ] {
            if v < 0.0 {
                return Err(Error::Data(format!("state field {name} must be >= 0, got {v}")));
            }
        }
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&self.yaw_rad) {
            return Err(Error::Data(format!("yaw_rad {} outside [-pi, pi]", self.yaw_rad)));
        }
        Ok(())
    }
}

/// Builds a state vector from raw relative kinematics: position,
/// velocity, and acceleration vectors plus lane offset and yaw angle.
/// The three vector quantities are reduced to Euclidean norms and the
/// yaw is wrapped into [-pi, pi]. Non-finite input is rejected.
pub fn build_state_vector(
    d: [f64; 3],
    d_dot: [f64; 3],
    d_ddot: [f64; 3],
    lane_offset: f64,
    yaw: f64,
) -> Result<StateVector> {
    for (name, v) in [("d", &d), ("d_dot", &d_dot), ("d_ddot", &d_ddot)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!("relative vector {name}")));
        }
    }
    if !lane_offset.is_finite() {
        return Err(Error::non_finite("lane_offset"));
    }
    if !yaw.is_finite() {
        return Err(Error::non_finite("yaw"));
    }
    let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    Ok(StateVector {
        range_m: norm(&d),
        speed_mps: norm(&d_dot),
        accel_mps2: norm(&d_ddot),
        lane_offset_m: lane_offset,
        yaw_rad: wrap_angle(yaw),
    })
}

/// Axis-aligned 2D bounding box, center plus extent, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
}

impl Detection {
    pub fn as_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.h, self.w]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cx", self.cx), ("cy", self.cy), ("h", self.h), ("w", self.w)] {
            if !v.is_finite() {
                return Err(Error::non_finite(format!("detection field {name}")));
            }
        }
        if self.h <= 0.0 || self.w <= 0.0 {
            return Err(Error::Data(format!(
                "detection extent must be positive, got h={} w={}",
                self.h, self.w
            )));
        }
        Ok(())
    }
}

/// Driving-agent class of the target vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Human,
    Autonomous,
}

impl Label {
    pub fn as_bit(self) -> u8 {
        match self {
            Label::Human => 0,
            Label::Autonomous => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_bit())
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_bit()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Human),
            1 => Ok(Label::Autonomous),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// One labeled observation sequence of a target vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub label: Label,
    /// Free-form context tags (city, traffic, weather, source, ...).
    pub metadata: BTreeMap<String, String>,
    pub state_series: Vec<StateVector>,
    /// One entry per timestamp; None where the detector had no output.
    pub detection_series: Vec<Option<Detection>>,
    /// Seconds between consecutive timestamps.
    pub sample_interval_s: f64,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.state_series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_series.is_empty()
    }

    pub fn source(&self) -> &str {
        self.metadata.get("source").map(String::as_str).unwrap_or("unknown")
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("scene id must be non-empty".into()));
        }
        if self.state_series.is_empty() {
            return Err(Error::Data(format!("scene {}: empty state series", self.id)));
        }
        if self.state_series.len() != self.detection_series.len() {
            return Err(Error::Shape(format!(
                "scene {}: {} states vs {} detection slots",
                self.id,
                self.state_series.len(),
                self.detection_series.len()
            )));
        }
        if !(self.sample_interval_s.is_finite() && self.sample_interval_s > 0.0) {
            return Err(Error::Data(format!(
                "scene {}: sample interval must be positive, got {}",
                self.id, self.sample_interval_s
            )));
        }
        for (t, s) in self.state_series.iter().enumerate() {
            s.validate().map_err(|e| Error::Data(format!("scene {} t={t}: {e}", self.id)))?;
        }
        for (t, d) in self.detection_series.iter().enumerate() {
            if let Some(d) = d {
                d.validate().map_err(|e| Error::Data(format!("scene {} t={t}: {e}", self.id)))?;
            }
        }
        Ok(())
    }
}

/// Feature layout of a derived dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    /// Kinematic state only, 5 features.
    S,
    /// Detection boxes only, 4 features.
    D,
    /// State columns first, then detection columns, 9 features.
    SPlusD,
}

impl VariantKind {
    pub fn width(self) -> usize {
        match self {
            VariantKind::S => 5,
            VariantKind::D => 4,
            VariantKind::SPlusD => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::S => "S",
            VariantKind::D => "D",
            VariantKind::SPlusD => "S+D",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(VariantKind::S),
            "D" | "d" => Ok(VariantKind::D),
            "S+D" | "s+d" | "SD" | "sd" => Ok(VariantKind::SPlusD),
            other => Err(Error::Config(format!("unknown dataset kind {other:?} (use S, D, or S+D)"))),
        }
    }

    /// True when the layout includes the 5 state columns (always first).
    pub fn has_state(self) -> bool {
        !matches!(self, VariantKind::D)
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combined per-timestamp row: state features then detection features.
pub fn concat_row(s: &StateVector, d: &Detection) -> [f64; 9] {
    let sa = s.as_array();
    let da = d.as_array();
    [sa[0], sa[1], sa[2], sa[3], sa[4], da[0], da[1], da[2], da[3]]
}

/// Dense T x k feature matrix for one scene.
///
/// For layouts that include detection columns, gaps in the detector
/// output are filled from the latest earlier detection; a leading gap
/// is filled from the first available one. A scene with no detections
/// at all cannot produce such a layout and is an error.
pub fn scene_matrix(scene: &Scene, kind: VariantKind) -> Result<Mat> {
    let t_len = scene.len();
    if t_len == 0 {
        return Err(Error::Data(format!("scene {}: empty state series", scene.id)));
    }
    let filled: Vec<Detection>;
    let dets: Option<&[Detection]> = match kind {
        VariantKind::S => None,
        VariantKind::D | VariantKind::SPlusD => {
            filled = fill_detection_gaps(&scene.detection_series).ok_or_else(|| {
                Error::Data(format!(
                    "scene {}: no detections available for kind {}",
                    scene.id, kind
                ))
            })?;
            Some(&filled)
        }
    };
    let mut m = Mat::zeros(t_len, kind.width());
    for t in 0..t_len {
        let row = m.row_mut(t);
        match kind {
            VariantKind::S => row.copy_from_slice(&scene.state_series[t].as_array()),
            VariantKind::D => row.copy_from_slice(&dets.unwrap()[t].as_array()),
            VariantKind::SPlusD => {
                row.copy_from_slice(&concat_row(&scene.state_series[t], &dets.unwrap()[t]))
            }
        }
    }
    Ok(m)
}

/// Carries detections forward over gaps; a leading gap takes the first
/// available detection. Returns None when the series has no detections.
pub fn fill_detection_gaps(series: &[Option<Detection>]) -> Option<Vec<Detection>> {
    let first = series.iter().flatten().next()?;
    let mut last = *first;
    Some(
        series
            .iter()
            .map(|d| {
                if let Some(d) = d {
                    last = *d;
                }
                last
            })
            .collect(),
    )
}

/// Full-scene dataset in one feature layout.
#[derive(Clone, Debug)]
pub struct DatasetVariant {
    pub kind: VariantKind,
    /// Scene id, feature matrix, label; one entry per scene, input order.
    pub samples: Vec<(String, Mat, Label)>,
}

/// Builds the per-scene feature matrices for every scene.
pub fn build_dataset(scenes: &[Scene], kind: VariantKind) -> Result<DatasetVariant> {
    let mut samples = Vec::with_capacity(scenes.len());
    for scene in scenes {
        samples.push((scene.id.clone(), scene_matrix(scene, kind)?, scene.label));
    }
    Ok(DatasetVariant { kind, samples })
}

/// Window length (timestamps) for a duration in seconds.
pub fn window_from_duration(duration_s: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("sample interval must be positive, got {dt}")));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {duration_s}")));
    }
    let w = (duration_s / dt).round();
    if w < 1.0 {
        return Err(Error::Config(format!(
            "duration {duration_s}s is shorter than one sample interval ({dt}s)"
        )));
    }
    Ok(w as usize)
}

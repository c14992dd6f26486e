//! Synthetic scene generator.
//!
//! Stands in for a driving simulator: produces labeled scenes whose
//! kinematics follow mean-reverting noise processes. The two built-in
//! styles differ in how aggressively acceleration moves. The smooth
//! style mimics an attentive human driver (low volatility, no sudden
//! maneuvers); the abrupt style mimics a controller that brakes and
//! accelerates sharply (higher volatility plus occasional large jumps).
//! Detection boxes are derived from the kinematics through a fixed
//! pinhole-style proxy, so box size co-varies with range and box
//! position with yaw.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, hash_str, rng_from};
use crate::scene::{Detection, Label, Scene, StateVector, IMAGE_HEIGHT, IMAGE_WIDTH};

/// Noise profile of a generated driver.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthStyle {
    /// Name recorded in scene metadata.
    pub name: String,
    /// Per-step innovation scale of the acceleration process, m/s^2.
    pub accel_volatility: f64,
    /// Expected sudden maneuvers per second (Poisson-like rate).
    pub jump_rate: f64,
    /// Magnitude of a sudden acceleration change, m/s^2.
    pub jump_magnitude: f64,
    /// Stationary spread of the lane-offset process, m.
    pub lane_wander_sd: f64,
    /// Stationary spread of the yaw process, rad.
    pub yaw_noise_sd: f64,
}

impl SynthStyle {
    /// Smooth, human-like driving: gentle acceleration, no jumps.
    pub fn smooth() -> Self {
        SynthStyle {
            name: "smooth".into(),
            accel_volatility: 0.25,
            jump_rate: 0.0,
            jump_magnitude: 0.0,
            lane_wander_sd: 0.15,
            yaw_noise_sd: 0.03,
        }
    }

    /// Abrupt, controller-like driving: strong volatility plus sharp
    /// braking/acceleration events.
    pub fn abrupt() -> Self {
        SynthStyle {
            name: "abrupt".into(),
            accel_volatility: 0.6,
            jump_rate: 0.2,
            jump_magnitude: 3.0,
            lane_wander_sd: 0.3,
            yaw_noise_sd: 0.08,
        }
    }

    pub fn for_label(label: Label) -> Self {
        match label {
            Label::Human => SynthStyle::smooth(),
            Label::Autonomous => SynthStyle::abrupt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("accel_volatility", self.accel_volatility),
            ("jump_rate", self.jump_rate),
            ("jump_magnitude", self.jump_magnitude),
            ("lane_wander_sd", self.lane_wander_sd),
            ("yaw_noise_sd", self.yaw_noise_sd),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("style field {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

// Fixed world model shared by both styles.
const RANGE_REF_M: f64 = 15.0;
const RANGE_MIN_M: f64 = 2.0;
const RANGE_REVERT: f64 = 0.3;
const RANGE_ACCEL_COUPLING: f64 = 0.6;
const RANGE_NOISE: f64 = 0.4;
const SPEED_INIT_MPS: f64 = 8.0;
const ACCEL_REVERT: f64 = 0.5;
const LANE_REVERT: f64 = 0.4;
const YAW_REVERT: f64 = 0.6;
const BOX_H_REF_PX: f64 = 40.0;
const BOX_ASPECT: f64 = 1.6;
const BOX_MIN_PX: f64 = 4.0;
const BOX_MAX_PX: f64 = 400.0;
const CX_YAW_GAIN: f64 = 600.0;
const CENTER_JITTER_PX: f64 = 2.0;

/// Generates one scene of `t_len` timestamps at interval `dt`.
///
/// Deterministic in (style, label, t_len, dt, seed); the label only
/// tags the output, the dynamics come from the style.
pub fn synth_scene(
    style: &SynthStyle,
    label: Label,
    id: &str,
    t_len: usize,
    dt: f64,
    seed: u64,
) -> Result<Scene> {
    style.validate()?;
    if t_len < 2 {
        return Err(Error::Config(format!("scene length must be >= 2, got {t_len}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("sample interval must be positive, got {dt}")));
    }

    let mut rng = rng_from(seed, &[hash_str("synth-scene")]);
    fn normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    // Discrete-time mean reversion: x' = phi x + noise, phi from the
    // continuous rate so behavior is stable across sample intervals.
    let phi_a = (-ACCEL_REVERT * dt).exp();
    let phi_l = (-LANE_REVERT * dt).exp();
    let phi_y = (-YAW_REVERT * dt).exp();
    let stat = |phi: f64| (1.0 - phi * phi).sqrt();

    // Start the stationary processes at a stationary draw so early
    // timestamps look no different from late ones.
    let mut accel = style.accel_volatility / stat(phi_a) * normal(&mut rng);
    let mut speed = (SPEED_INIT_MPS + normal(&mut rng)).max(0.0);
    let mut range = RANGE_REF_M + 2.0 * normal(&mut rng);
    let mut lane = style.lane_wander_sd * normal(&mut rng);
    let mut yaw = style.yaw_noise_sd * normal(&mut rng);

    let mut states = Vec::with_capacity(t_len);
    let mut dets = Vec::with_capacity(t_len);
    let mut jump_events: u32 = 0;

    for _ in 0..t_len {
        range = range.max(RANGE_MIN_M);
        let state = StateVector {
            range_m: range,
            speed_mps: speed,
            accel_mps2: accel.abs(),
            lane_offset_m: lane,
            yaw_rad: crate::scene::wrap_angle(yaw),
        };
        let h = (BOX_H_REF_PX * RANGE_REF_M / range).clamp(BOX_MIN_PX, BOX_MAX_PX);
        let det = Detection {
            cx: (IMAGE_WIDTH / 2.0 + CX_YAW_GAIN * state.yaw_rad + CENTER_JITTER_PX * normal(&mut rng))
                .clamp(0.0, IMAGE_WIDTH),
            cy: (IMAGE_HEIGHT / 2.0 + CENTER_JITTER_PX * normal(&mut rng)).clamp(0.0, IMAGE_HEIGHT),
            h,
            w: BOX_ASPECT * h,
        };
        states.push(state);
        dets.push(Some(det));

        // Evolve to the next timestamp.
        let jump = if style.jump_rate > 0.0 && rng.gen::<f64>() < style.jump_rate * dt {
            jump_events += 1;
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * style.jump_magnitude
        } else {
            0.0
        };
        accel = phi_a * accel + style.accel_volatility * normal(&mut rng) + jump;
        speed = (speed + accel * dt).max(0.0);
        range = (range + RANGE_REVERT * (RANGE_REF_M - range) * dt - RANGE_ACCEL_COUPLING * accel * dt
            + RANGE_NOISE * dt.sqrt() * normal(&mut rng))
        .max(RANGE_MIN_M);
        lane = phi_l * lane + style.lane_wander_sd * stat(phi_l) * normal(&mut rng);
        yaw = phi_y * yaw + style.yaw_noise_sd * stat(phi_y) * normal(&mut rng);
    }

    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("source".into(), "synthetic".into());
    metadata.insert("city".into(), "synthville".into());
    metadata.insert("traffic".into(), "medium".into());
    metadata.insert("weather".into(), "clear".into());
    metadata.insert("style".into(), style.name.clone());
    metadata.insert("jump_events".into(), jump_events.to_string());

    let scene = Scene {
        id: id.to_string(),
        label,
        metadata,
        state_series: states,
        detection_series: dets,
        sample_interval_s: dt,
    };
    scene.validate()?;
    Ok(scene)
}

/// Generates a balanced corpus: `n_per_class` abrupt scenes labeled
/// autonomous and `n_per_class` smooth scenes labeled human, ids sorted.
pub fn synth_dataset(n_per_class: usize, t_len: usize, dt: f64, seed: u64) -> Result<Vec<Scene>> {
    if n_per_class == 0 {
        return Err(Error::Config("need at least one scene per class".into()));
    }
    let mut scenes = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let id = format!("synth-a-{i:04}");
        let scene_seed = derive_seed(seed, &[1, i as u64]);
        scenes.push(synth_scene(&SynthStyle::abrupt(), Label::Autonomous, &id, t_len, dt, scene_seed)?);
    }
    for i in 0..n_per_class {
        let id = format!("synth-h-{i:04}");
        let scene_seed = derive_seed(seed, &[0, i as u64]);
        scenes.push(synth_scene(&SynthStyle::smooth(), Label::Human, &id, t_len, dt, scene_seed)?);
    }
    scenes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(scenes)
}

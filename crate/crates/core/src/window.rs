//! Sliding windows, scene-level splits, and the degradation operator.
//!
//! Splits happen at scene granularity before any windowing so that no
//! window of a test scene can leak into training. Degradation knocks
//! out whole state rows (set to NaN) to emulate sensor dropout at test
//! time; detection columns are never touched. Imputation repairs the
//! masked rows from the latest known state.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{hash_str, rng_from};
use crate::scene::{scene_matrix, Label, Scene, VariantKind};

/// One fixed-length slice of a scene's feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub scene_id: String,
    /// Timestamp index of the first row within the source scene.
    pub start_index: usize,
    pub kind: VariantKind,
    /// W x k feature matrix.
    pub matrix: Mat,
    pub label: Label,
    /// Per-row degradation mask; all false until `degrade` marks rows.
    pub mask: Vec<bool>,
}

impl WindowSample {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }
}

/// Cuts one scene into windows of `w` rows every `stride` timestamps.
///
/// Yields floor((T - w) / stride) + 1 windows; a scene shorter than
/// one window yields an error rather than a silent empty result.
pub fn slide(scene: &Scene, kind: VariantKind, w: usize, stride: usize) -> Result<Vec<WindowSample>> {
    if w == 0 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let t_len = scene.len();
    if t_len < w {
        return Err(Error::Data(format!(
            "scene {}: {} timestamps cannot fill a window of {w}",
            scene.id, t_len
        )));
    }
    let full = scene_matrix(scene, kind)?;
    let count = (t_len - w) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        out.push(WindowSample {
            scene_id: scene.id.clone(),
            start_index: start,
            kind,
            matrix: full.slice_rows(start, w)?,
            label: scene.label,
            mask: vec![false; w],
        });
    }
    Ok(out)
}

/// Windows every scene, concatenated in scene order.
pub fn slide_all(
    scenes: &[Scene],
    kind: VariantKind,
    w: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for scene in scenes {
        out.extend(slide(scene, kind, w, stride)?);
    }
    Ok(out)
}

/// Scene-id partition into train/validation/test.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitPlan {
    pub fn select<'a>(&self, scenes: &'a [Scene], ids: &[String]) -> Vec<&'a Scene> {
        let wanted: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        scenes.iter().filter(|s| wanted.contains(s.id.as_str())).collect()
    }
}

/// Stratified 70/10/20 split over whole scenes.
///
/// Each class is shuffled and cut separately so class balance carries
/// into every part; rounding never leaves validation or test empty
/// (scenes are pulled back from train when it would).
pub fn split_scenes(scenes: &[Scene], seed: u64) -> Result<SplitPlan> {
    if scenes.len() < 10 {
        return Err(Error::Config(format!(
            "need at least 10 scenes to split 70/10/20, got {}",
            scenes.len()
        )));
    }
    let mut by_class: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for s in scenes {
        by_class[s.label.as_bit() as usize].push(&s.id);
    }
    if by_class.iter().any(|c| c.is_empty()) {
        return Err(Error::Data("both classes must be present to stratify".into()));
    }

    let mut plan = SplitPlan {
        seed,
        train_ids: Vec::new(),
        val_ids: Vec::new(),
        test_ids: Vec::new(),
    };
    for (bit, ids) in by_class.iter().enumerate() {
        let mut ids: Vec<&str> = ids.clone();
        let mut rng = rng_from(seed, &[hash_str("scene-split"), bit as u64]);
        ids.shuffle(&mut rng);

        let n = ids.len();
        let mut n_train = (0.7 * n as f64).round() as usize;
        let mut n_val = (0.1 * n as f64).round() as usize;
        // Keep every part non-empty, stealing from train which is
        // always the largest.
        while n_train + n_val > n - 1 {
            if n_val > 1 {
                n_val -= 1;
            } else {
                n_train -= 1;
            }
        }
        if n_val == 0 {
            n_train = n_train.saturating_sub(1);
            n_val = 1;
        }
        plan.train_ids.extend(ids[..n_train].iter().map(|s| s.to_string()));
        plan.val_ids.extend(ids[n_train..n_train + n_val].iter().map(|s| s.to_string()));
        plan.test_ids.extend(ids[n_train + n_val..].iter().map(|s| s.to_string()));
    }
    plan.train_ids.sort();
    plan.val_ids.sort();
    plan.test_ids.sort();
    Ok(plan)
}

/// Number of rows masked at drop rate `r` in a window of `w` rows.
pub fn masked_row_count(r: f64, w: usize) -> usize {
    (r * w as f64).round() as usize
}

/// Masks a fraction `r` of rows in every window: chosen rows get their
/// state columns set to NaN and their mask bit raised. Detection
/// columns are left untouched. Masked rows are drawn without
/// replacement by a per-window stream derived from (seed, scene id,
/// start index), so the same window degrades identically regardless of
/// batch composition or iteration order.
pub fn degrade(samples: &[WindowSample], r: f64, seed: u64) -> Result<Vec<WindowSample>> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Config(format!("drop rate must lie in (0, 1), got {r}")));
    }
    samples
        .iter()
        .map(|s| {
            if s.kind != VariantKind::SPlusD {
                return Err(Error::Config(format!(
                    "degradation applies to the combined layout, got kind {}",
                    s.kind
                )));
            }
            let w = s.len();
            let n_mask = masked_row_count(r, w);
            let mut rng = rng_from(seed, &[hash_str("degrade"), hash_str(&s.scene_id), s.start_index as u64]);
            let mut rows: Vec<usize> = (0..w).collect();
            // Partial Fisher-Yates: the first n_mask entries are a
            // uniform sample without replacement.
            for i in 0..n_mask {
                let j = rng.gen_range(i..w);
                rows.swap(i, j);
            }
            let mut out = s.clone();
            for &row in &rows[..n_mask] {
                out.mask[row] = true;
                for col in 0..5 {
                    out.matrix.set(row, col, f64::NAN);
                }
            }
            Ok(out)
        })
        .collect()
}

/// Repairs masked rows by copying the state columns of the latest
/// unmasked row before them; a leading masked run copies the first
/// unmasked row. Detection columns are untouched. A window with every
/// row masked cannot be repaired.
pub fn impute_last_known(sample: &WindowSample) -> Result<WindowSample> {
    let w = sample.len();
    let first_clear = sample
        .mask
        .iter()
        .position(|m| !m)
        .ok_or_else(|| Error::Data("cannot impute a fully masked window".into()))?;
    let state_cols = sample.kind.width().min(5);
    if !sample.kind.has_state() {
        return Err(Error::Config("imputation needs state columns".into()));
    }
    let mut out = sample.clone();
    let mut latest = first_clear;
    for row in 0..w {
        if sample.mask[row] {
            for col in 0..state_cols {
                let v = out.matrix.get(latest, col);
                out.matrix.set(row, col, v);
            }
        } else {
            latest = row;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Label;
    use crate::synth::{synth_dataset, synth_scene, SynthStyle};

    fn scene(t_len: usize) -> Scene {
        synth_scene(&SynthStyle::abrupt(), Label::Autonomous, "w-0001", t_len, 0.5, 5).unwrap()
    }

    #[test]
    fn window_count_matches_formula() {
        let s = scene(120);
        for (w, stride, expect) in [(50, 5, 15), (10, 1, 111), (120, 1, 1), (20, 7, 15)] {
            let windows = slide(&s, VariantKind::S, w, stride).unwrap();
            assert_eq!(windows.len(), expect, "w={w} stride={stride}");
            assert!(windows.iter().all(|x| x.len() == w));
            // Consecutive starts differ by the stride.
            for pair in windows.windows(2) {
                assert_eq!(pair[1].start_index - pair[0].start_index, stride);
            }
        }
    }

    #[test]
    fn windows_carry_scene_rows() {
        let s = scene(30);
        let full = scene_matrix(&s, VariantKind::SPlusD).unwrap();
        let windows = slide(&s, VariantKind::SPlusD, 10, 3).unwrap();
        for win in &windows {
            for row in 0..win.len() {
                assert_eq!(win.matrix.row(row), full.row(win.start_index + row));
            }
        }
    }

    #[test]
    fn short_scene_and_zero_stride_error() {
        let s = scene(9);
        assert!(slide(&s, VariantKind::S, 10, 1).is_err());
        let s = scene(20);
        assert!(slide(&s, VariantKind::S, 10, 0).is_err());
        assert!(slide(&s, VariantKind::S, 0, 1).is_err());
    }

    #[test]
    fn split_is_a_partition_with_expected_proportions() {
        let scenes = synth_dataset(20, 12, 0.5, 3).unwrap();
        let plan = split_scenes(&scenes, 17).unwrap();
        let mut all: Vec<&String> =
            plan.train_ids.iter().chain(&plan.val_ids).chain(&plan.test_ids).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 40);
        assert_eq!(plan.train_ids.len(), 28);
        assert_eq!(plan.val_ids.len(), 4);
        assert_eq!(plan.test_ids.len(), 8);
        // Stratification: half of each part is autonomous.
        let auto = |ids: &[String]| ids.iter().filter(|i| i.contains("-a-")).count();
        assert_eq!(auto(&plan.train_ids), 14);
        assert_eq!(auto(&plan.val_ids), 2);
        assert_eq!(auto(&plan.test_ids), 4);
    }

    #[test]
    fn split_depends_only_on_seed() {
        let scenes = synth_dataset(10, 12, 0.5, 3).unwrap();
        assert_eq!(split_scenes(&scenes, 1).unwrap(), split_scenes(&scenes, 1).unwrap());
        assert_ne!(split_scenes(&scenes, 1).unwrap(), split_scenes(&scenes, 2).unwrap());
    }

    #[test]
    fn split_rejects_tiny_or_single_class_corpora() {
        let scenes = synth_dataset(4, 12, 0.5, 3).unwrap();
        assert!(split_scenes(&scenes, 0).is_err());
        let one_class: Vec<Scene> = (0..12)
            .map(|i| {
                synth_scene(&SynthStyle::smooth(), Label::Human, &format!("h-{i}"), 12, 0.5, i).unwrap()
            })
            .collect();
        assert!(split_scenes(&one_class, 0).is_err());
    }

    #[test]
    fn degrade_masks_exact_row_count_and_keeps_detections() {
        let s = scene(60);
        let windows = slide(&s, VariantKind::SPlusD, 20, 10).unwrap();
        for r in [0.2, 0.4, 0.6, 0.8] {
            let degraded = degrade(&windows, r, 9).unwrap();
            for (orig, deg) in windows.iter().zip(&degraded) {
                let expect = masked_row_count(r, 20);
                assert_eq!(deg.mask.iter().filter(|m| **m).count(), expect);
                for row in 0..20 {
                    for col in 0..9 {
                        let v = deg.matrix.get(row, col);
                        if deg.mask[row] && col < 5 {
                            assert!(v.is_nan());
                        } else {
                            // Untouched cells are bit-identical.
                            assert_eq!(v.to_bits(), orig.matrix.get(row, col).to_bits());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn degrade_is_deterministic_per_window_not_per_batch() {
        let s = scene(60);
        let windows = slide(&s, VariantKind::SPlusD, 20, 10).unwrap();
        let all = degrade(&windows, 0.4, 9).unwrap();
        // Degrading a sub-slice produces the same masks for the same
        // windows. NaN breaks plain equality, so compare bit patterns.
        let tail = degrade(&windows[2..], 0.4, 9).unwrap();
        for (a, b) in all[2..].iter().zip(&tail) {
            assert_eq!(a.mask, b.mask);
            let bits = |m: &crate::mat::Mat| -> Vec<u64> {
                m.as_slice().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&a.matrix), bits(&b.matrix));
        }
    }

    #[test]
    fn degrade_rejects_bad_rate_and_kind() {
        let s = scene(30);
        let windows = slide(&s, VariantKind::SPlusD, 10, 5).unwrap();
        assert!(degrade(&windows, 0.0, 1).is_err());
        assert!(degrade(&windows, 1.0, 1).is_err());
        let state_only = slide(&s, VariantKind::S, 10, 5).unwrap();
        assert!(degrade(&state_only, 0.4, 1).is_err());
    }

    #[test]
    fn impute_copies_latest_known_state() {
        let s = scene(40);
        let windows = slide(&s, VariantKind::SPlusD, 10, 40).unwrap();
        let degraded = degrade(&windows, 0.4, 21).unwrap();
        for (orig, deg) in windows.iter().zip(&degraded) {
            let fixed = impute_last_known(deg).unwrap();
            assert_eq!(fixed.mask, deg.mask);
            let first_clear = deg.mask.iter().position(|m| !m).unwrap();
            let mut latest = first_clear;
            for row in 0..10 {
                if !deg.mask[row] {
                    latest = row;
                }
                for col in 0..9 {
                    let want = if col < 5 {
                        orig.matrix.get(if deg.mask[row] { latest } else { row }, col)
                    } else {
                        orig.matrix.get(row, col)
                    };
                    assert_eq!(fixed.matrix.get(row, col).to_bits(), want.to_bits());
                }
                assert!(!fixed.matrix.row(row).iter().any(|v| v.is_nan()));
            }
        }
    }

    #[test]
    fn impute_without_mask_is_identity() {
        let s = scene(30);
        let windows = slide(&s, VariantKind::SPlusD, 10, 5).unwrap();
        for w in &windows {
            assert_eq!(&impute_last_known(w).unwrap(), w);
        }
    }

    #[test]
    fn impute_fails_on_fully_masked_window() {
        let s = scene(30);
        let mut w = slide(&s, VariantKind::SPlusD, 10, 30).unwrap().remove(0);
        w.mask = vec![true; 10];
        assert!(matches!(impute_last_known(&w), Err(Error::Data(_))));
    }
}

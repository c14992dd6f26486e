//! End-to-end coverage of the data path: generate scenes, write them
//! to an archive, read them back bit-exactly, cut windows, degrade and
//! impute, and train a classifier whose saved form predicts
//! identically after reload.

use drivescope_core::eval::grid::{ClassifierGrid, RfGrid};
use drivescope_core::eval::{run_classification, ClassifyOptions};
use drivescope_core::ingest::{ingest_archive, write_scene, ColumnMap};
use drivescope_core::learners::forest::{MaxFeatures, SplitCriterion};
use drivescope_core::learners::{fit_forest, RfHyperParams, TrainedModel};
use drivescope_core::scene::{Label, VariantKind};
use drivescope_core::synth::synth_dataset;
use drivescope_core::window::{degrade, impute_last_known, masked_row_count, slide, slide_all};

#[test]
fn archive_round_trip_is_bit_exact() {
    let scenes = synth_dataset(2, 120, 0.5, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in &scenes {
        write_scene(s, dir.path(), false).unwrap();
    }
    let outcome = ingest_archive(dir.path(), &ColumnMap::default()).unwrap();
    assert!(outcome.skipped.is_empty(), "{:?}", outcome.skipped);
    assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
    assert_eq!(outcome.scenes.len(), scenes.len());
    for (orig, back) in scenes.iter().zip(&outcome.scenes) {
        assert_eq!(orig.id, back.id);
        assert_eq!(orig.label, back.label);
        assert_eq!(orig.sample_interval_s, back.sample_interval_s);
        for (a, b) in orig.state_series.iter().zip(&back.state_series) {
            for (x, y) in a.as_array().iter().zip(b.as_array()) {
                assert_eq!(x.to_bits(), y.to_bits(), "state drifted through the archive");
            }
        }
        for (a, b) in orig.detection_series.iter().zip(&back.detection_series) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.as_array().iter().zip(b.as_array()) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
                (None, None) => {}
                _ => panic!("detection presence changed through the archive"),
            }
        }
    }
}

#[test]
fn short_scenes_are_skipped_not_fatal() {
    let good = synth_dataset(1, 120, 0.5, 3).unwrap();
    let short = synth_dataset(1, 40, 0.5, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in &good {
        write_scene(s, dir.path(), false).unwrap();
    }
    // Give the short scenes distinct ids so they land in their own dirs.
    for s in &short {
        let mut s = s.clone();
        s.id = format!("short-{}", s.id);
        write_scene(&s, dir.path(), false).unwrap();
    }
    let outcome = ingest_archive(dir.path(), &ColumnMap::default()).unwrap();
    assert_eq!(outcome.scenes.len(), 2);
    assert_eq!(outcome.skipped.len(), 2);
    for skip in &outcome.skipped {
        assert!(skip.reason.contains("timestamps"), "{}", skip.reason);
    }
}

#[test]
fn degrade_impute_contract_on_real_windows() {
    let scenes = synth_dataset(1, 60, 0.5, 21).unwrap();
    let windows = slide(&scenes[0], VariantKind::SPlusD, 20, 10).unwrap();
    let rate = 0.6;
    let masked = degrade(&windows, rate, 77).unwrap();
    assert_eq!(masked.len(), windows.len());
    for (orig, m) in windows.iter().zip(&masked) {
        let expect = masked_row_count(rate, 20);
        assert_eq!(m.mask.iter().filter(|&&b| b).count(), expect);
        for i in 0..20 {
            for c in 0..9 {
                let v = m.matrix.get(i, c);
                if c < 5 && m.mask[i] {
                    assert!(v.is_nan(), "state col {c} row {i} should be masked");
                } else {
                    assert_eq!(
                        v.to_bits(),
                        orig.matrix.get(i, c).to_bits(),
                        "unmasked cell changed"
                    );
                }
            }
        }
        let fixed = impute_last_known(m).unwrap();
        // Every masked row now repeats the latest unmasked state row.
        let mut last: Option<usize> = None;
        let first_clear = (0..20).find(|&i| !m.mask[i]).unwrap();
        for i in 0..20 {
            if !m.mask[i] {
                last = Some(i);
            }
            let src = last.unwrap_or(first_clear);
            for c in 0..5 {
                assert_eq!(fixed.matrix.get(i, c).to_bits(), orig.matrix.get(src, c).to_bits());
            }
            for c in 5..9 {
                assert_eq!(fixed.matrix.get(i, c).to_bits(), orig.matrix.get(i, c).to_bits());
            }
        }
        assert!(fixed.matrix.as_slice().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn saved_classifier_predicts_identically_after_reload() {
    let scenes = synth_dataset(5, 40, 0.5, 31).unwrap();
    let windows = slide_all(&scenes, VariantKind::SPlusD, 10, 5).unwrap();
    let hp = RfHyperParams { n_trees: 20, ..RfHyperParams::default() };
    let model = fit_forest(&windows, &hp, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    for w in &windows {
        assert_eq!(
            model.predict_proba(&w.matrix).unwrap().to_bits(),
            back.predict_proba(&w.matrix).unwrap().to_bits()
        );
    }
}

#[test]
fn experiment_results_do_not_depend_on_thread_count() {
    let scenes = synth_dataset(6, 30, 0.5, 13).unwrap();
    let opts = ClassifyOptions {
        kind: VariantKind::SPlusD,
        window: 10,
        stride: 10,
        repeats: 1,
        cv_folds: 2,
        grid: ClassifierGrid::Rf(RfGrid {
            n_trees: vec![12],
            min_leaf: vec![1],
            criterion: vec![SplitCriterion::Gini],
            max_features: vec![MaxFeatures::Sqrt],
        }),
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_classification(&scenes, &opts, 55).unwrap());
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_classification(&scenes, &opts, 55).unwrap());
    assert_eq!(
        serde_json::to_string(&single).unwrap(),
        serde_json::to_string(&multi).unwrap()
    );
}

#[test]
fn scene_labels_survive_windowing() {
    let scenes = synth_dataset(3, 30, 0.5, 41).unwrap();
    let windows = slide_all(&scenes, VariantKind::S, 10, 5).unwrap();
    for w in &windows {
        let scene = scenes.iter().find(|s| s.id == w.scene_id).unwrap();
        assert_eq!(w.label, scene.label);
        assert!(matches!(w.label, Label::Human | Label::Autonomous));
    }
}

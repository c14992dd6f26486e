//! Shared fixtures for the pipeline benchmarks.

use drivescope_core::{synth_dataset, Scene, VariantKind, WindowSample};

pub fn bench_scenes() -> Vec<Scene> {
    synth_dataset(10, 120, 0.5, 42).expect("synthetic corpus")
}

pub fn bench_windows(scenes: &[Scene]) -> Vec<WindowSample> {
    drivescope_core::slide_all(scenes, VariantKind::SPlusD, 20, 5).expect("windows")
}

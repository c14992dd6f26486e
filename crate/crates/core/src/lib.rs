//! Core library for deciding whether a monitored vehicle is driven by
//! a human or by an autonomous stack, from time series of its
//! kinematic state and camera detections.
//!
//! The pipeline: scenes (labelled state + detection series) come from
//! the synthetic generator or from an ingested archive, a sliding
//! window cuts them into fixed-length samples, and three hand-rolled
//! learners consume those windows: a random forest and a recurrent
//! classifier for the driver label, and a small feed-forward
//! autoregressor that predicts future state rows. The eval module adds
//! metrics, cross-validated hyperparameter search, and the repeated
//! split experiment drivers, including test-time state degradation
//! with latest-known-state imputation.
//!
//! Everything is deterministic given a master seed: the same inputs
//! and seed reproduce every report byte for byte, independent of
//! thread count.

pub mod assign;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod learners;
pub mod mat;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use mat::Mat;
pub use scene::{
    build_state_vector, scene_matrix, wrap_angle, Detection, Label, Scene, StateVector,
    VariantKind, FULL_SCENE_LEN, IMAGE_HEIGHT, IMAGE_WIDTH,
};
pub use synth::{synth_dataset, synth_scene, SynthStyle};
pub use window::{
    degrade, impute_last_known, masked_row_count, slide, slide_all, split_scenes, SplitPlan,
    WindowSample,
};

/// Version stamp embedded in reports and manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

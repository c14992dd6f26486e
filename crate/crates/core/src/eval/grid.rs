//! Hyperparameter grids and cross-validated selection.
//!
//! Candidate configurations are scored with k-fold cross validation on
//! the training windows. Folds are cut at scene granularity so that no
//! scene contributes windows to both sides of a fold, then the
//! configuration with the highest mean validation ROC area wins. Ties
//! keep the earliest candidate in grid order, which makes selection
//! reproducible byte for byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::folds::stratified_fold_assignment;
use crate::eval::metrics::roc_auc;
use crate::learners::forest::{MaxFeatures, RfHyperParams, SplitCriterion};
use crate::learners::recurrent::SeqHyperParams;
use crate::learners::{fit_forest, fit_sequence, HyperParams, TrainedModel};
use crate::rng::derive_seed;
use crate::scene::Label;
use crate::window::WindowSample;

fn default_rf_n_trees() -> Vec<usize> {
    (1..=10).map(|k| k * 100).collect()
}

fn default_rf_min_leaf() -> Vec<usize> {
    (1..=5).collect()
}

fn default_rf_criteria() -> Vec<SplitCriterion> {
    vec![SplitCriterion::Gini, SplitCriterion::Entropy]
}

fn default_rf_max_features() -> Vec<MaxFeatures> {
    vec![MaxFeatures::Sqrt, MaxFeatures::Log2]
}

/// Axes of the random-forest search. The default grid covers tree
/// counts 100..1000, leaf sizes 1..5, both impurity measures and both
/// feature-subset rules (200 candidates).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RfGrid {
    #[serde(default = "default_rf_n_trees")]
    pub n_trees: Vec<usize>,
    #[serde(default = "default_rf_min_leaf")]
    pub min_leaf: Vec<usize>,
    #[serde(default = "default_rf_criteria")]
    pub criterion: Vec<SplitCriterion>,
    #[serde(default = "default_rf_max_features")]
    pub max_features: Vec<MaxFeatures>,
}

impl Default for RfGrid {
    fn default() -> Self {
        Self {
            n_trees: default_rf_n_trees(),
            min_leaf: default_rf_min_leaf(),
            criterion: default_rf_criteria(),
            max_features: default_rf_max_features(),
        }
    }
}

impl RfGrid {
    pub fn configs(&self) -> Vec<RfHyperParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &min_leaf in &self.min_leaf {
                for &criterion in &self.criterion {
                    for &max_features in &self.max_features {
                        out.push(RfHyperParams { n_trees, min_leaf, criterion, max_features });
                    }
                }
            }
        }
        out
    }
}

fn default_seq_depth() -> Vec<usize> {
    vec![1, 4, 8]
}

fn default_seq_dropout() -> Vec<f64> {
    vec![0.1, 0.3]
}

fn default_seq_hidden() -> Vec<usize> {
    vec![32, 64, 128]
}

/// Axes of the recurrent-classifier search (18 candidates by default).
/// Optimizer settings are shared across candidates via
/// [`SeqTrainSettings`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeqGrid {
    #[serde(default = "default_seq_depth")]
    pub depth: Vec<usize>,
    #[serde(default = "default_seq_dropout")]
    pub dropout: Vec<f64>,
    #[serde(default = "default_seq_hidden")]
    pub hidden_dim: Vec<usize>,
}

impl Default for SeqGrid {
    fn default() -> Self {
        Self {
            depth: default_seq_depth(),
            dropout: default_seq_dropout(),
            hidden_dim: default_seq_hidden(),
        }
    }
}

/// Optimizer settings applied to every recurrent grid candidate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SeqTrainSettings {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SeqTrainSettings {
    fn default() -> Self {
        let d = SeqHyperParams::default();
        Self {
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

impl SeqGrid {
    pub fn configs(&self, shared: &SeqTrainSettings) -> Vec<SeqHyperParams> {
        let mut out = Vec::new();
        for &depth in &self.depth {
            for &dropout in &self.dropout {
                for &hidden_dim in &self.hidden_dim {
                    out.push(SeqHyperParams {
                        depth,
                        dropout,
                        hidden_dim,
                        batch_size: shared.batch_size,
                        learning_rate: shared.learning_rate,
                        max_epochs: shared.max_epochs,
                        patience: shared.patience,
                    });
                }
            }
        }
        out
    }
}

/// The search space for one classifier family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassifierGrid {
    Rf(RfGrid),
    Seq {
        #[serde(default)]
        grid: SeqGrid,
        #[serde(default)]
        train: SeqTrainSettings,
    },
}

impl ClassifierGrid {
    fn candidates(&self) -> Vec<HyperParams> {
        match self {
            ClassifierGrid::Rf(g) => g.configs().into_iter().map(HyperParams::Rf).collect(),
            ClassifierGrid::Seq { grid, train } => {
                grid.configs(train).into_iter().map(HyperParams::Seq).collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ClassifierGrid::Rf(g) => {
                g.n_trees.len() * g.min_leaf.len() * g.criterion.len() * g.max_features.len()
            }
            ClassifierGrid::Seq { grid, .. } => {
                grid.depth.len() * grid.dropout.len() * grid.hidden_dim.len()
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scores of one grid candidate across the CV folds, or the error that
/// stopped it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigScore {
    pub hyperparams: HyperParams,
    pub fold_scores: Vec<f64>,
    pub mean_score: Option<f64>,
    pub error: Option<String>,
}

/// Maps each distinct scene id (in first-appearance order) to a fold,
/// stratified by scene label.
pub fn scene_fold_assignment(
    windows: &[WindowSample],
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>> {
    let mut ids: Vec<&str> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    for w in windows {
        if seen.insert(w.scene_id.as_str(), ()).is_none() {
            ids.push(&w.scene_id);
            labels.push(w.label);
        }
    }
    let fold_of = stratified_fold_assignment(&labels, k, seed)?;
    Ok(ids
        .into_iter()
        .zip(fold_of)
        .map(|(id, f)| (id.to_string(), f))
        .collect())
}

fn fit_candidate(
    hp: &HyperParams,
    cv_train: &[WindowSample],
    cv_val: &[WindowSample],
    seed: u64,
) -> Result<TrainedModel> {
    match hp {
        HyperParams::Rf(rf) => fit_forest(cv_train, rf, seed),
        HyperParams::Seq(sq) => fit_sequence(cv_train, cv_val, sq, seed),
        HyperParams::Mlp(_) => Err(Error::Config("autoregressors are not grid-searched".into())),
    }
}

/// Cross-validated grid search. Returns the winning configuration and
/// the full score table. Candidates that fail to train are recorded
/// and skipped; if every candidate fails the search itself fails.
pub fn grid_search(
    grid: &ClassifierGrid,
    train_windows: &[WindowSample],
    k: usize,
    seed: u64,
) -> Result<(HyperParams, Vec<ConfigScore>)> {
    let candidates = grid.candidates();
    if candidates.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let fold_of = scene_fold_assignment(train_windows, k, derive_seed(seed, &[0]))?;

    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (ci, hp) in candidates.iter().enumerate() {
        let mut fold_scores = Vec::with_capacity(k);
        let mut failure: Option<String> = None;
        for fold in 0..k {
            let cv_train: Vec<WindowSample> = train_windows
                .iter()
                .filter(|w| fold_of[&w.scene_id] != fold)
                .cloned()
                .collect();
            let cv_val: Vec<WindowSample> = train_windows
                .iter()
                .filter(|w| fold_of[&w.scene_id] == fold)
                .cloned()
                .collect();
            let run = fit_candidate(hp, &cv_train, &cv_val, derive_seed(seed, &[ci as u64 + 1, fold as u64]))
                .and_then(|model| {
                    let scores = model.predict_proba_batch(&cv_val)?;
                    let labels: Vec<Label> = cv_val.iter().map(|w| w.label).collect();
                    roc_auc(&scores, &labels)
                });
            match run {
                Ok(s) => fold_scores.push(s),
                Err(e) => {
                    failure = Some(format!("fold {fold}: {e}"));
                    break;
                }
            }
        }
        let entry = if let Some(msg) = failure {
            ConfigScore { hyperparams: hp.clone(), fold_scores, mean_score: None, error: Some(msg) }
        } else {
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            if best.map_or(true, |(_, b)| mean > b) {
                best = Some((ci, mean));
            }
            ConfigScore { hyperparams: hp.clone(), fold_scores, mean_score: Some(mean), error: None }
        };
        table.push(entry);
    }

    match best {
        Some((ci, _)) => Ok((candidates[ci].clone(), table)),
        None => Err(Error::Training("every grid candidate failed cross validation".into())),
    }
}

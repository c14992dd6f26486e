//! Learner families and the serialized trained-model envelope.
//!
//! Three families share one wrapper: the forest and the recurrent
//! classifier score windows with a probability of the autonomous
//! class, the feed-forward autoregressor predicts future state rows.
//! A trained model carries its normalizer, hyper-parameters, seed, and
//! training history, and serializes to versioned JSON that reproduces
//! predictions bit-exactly after a round trip.

pub mod adam;
pub mod forest;
pub mod mlp;
pub mod normalizer;
pub mod recurrent;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{reshape, Mat};
use crate::scene::Label;
use crate::window::WindowSample;

pub use adam::{AdamConfig, AdamState};
pub use forest::{RandomForest, RfHyperParams};
pub use mlp::{MlpHyperParams, MlpRegressor};
pub use normalizer::Normalizer;
pub use recurrent::{SeqClassifier, SeqHyperParams};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Rf,
    Seq,
    Mlp,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Rf => "rf",
            ModelFamily::Seq => "seq",
            ModelFamily::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(ModelFamily::Rf),
            "seq" => Ok(ModelFamily::Seq),
            "mlp" => Ok(ModelFamily::Mlp),
            other => Err(Error::Config(format!("unknown model family {other:?} (use rf, seq, or mlp)"))),
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Rf(RandomForest),
    Seq(SeqClassifier),
    Mlp(MlpRegressor),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperParams {
    Rf(RfHyperParams),
    Seq(SeqHyperParams),
    Mlp(MlpHyperParams),
}

/// One line of training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation quality, higher is better (ranking score for the
    /// classifiers, negated MSE for the autoregressor).
    pub val_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub params: ModelParams,
    pub normalizer: Normalizer,
    pub hyperparams: HyperParams,
    pub seed: u64,
    pub training_log: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    schema_version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    /// Probability that the window shows an autonomous driver.
    pub fn predict_proba(&self, window: &Mat) -> Result<f64> {
        let norm = self.normalizer.apply_mat(window)?;
        match &self.params {
            ModelParams::Rf(forest) => forest.predict_proba(norm.as_slice()),
            ModelParams::Seq(model) => {
                let logit = model.forward_logit(&norm)?;
                Ok(1.0 / (1.0 + (-logit).exp()))
            }
            ModelParams::Mlp(_) => {
                Err(Error::Config("the autoregressor does not classify windows".into()))
            }
        }
    }

    /// Scores a batch of windows in parallel, preserving order.
    pub fn predict_proba_batch(&self, windows: &[WindowSample]) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        windows.par_iter().map(|w| self.predict_proba(&w.matrix)).collect()
    }

    /// Future state rows (physical units) for a raw history matrix.
    pub fn predict_future(&self, history: &Mat) -> Result<Mat> {
        let (model, hp) = match (&self.params, &self.hyperparams) {
            (ModelParams::Mlp(m), HyperParams::Mlp(hp)) => (m, hp),
            _ => return Err(Error::Config("only the autoregressor predicts future state".into())),
        };
        if history.rows() != hp.history {
            return Err(Error::Shape(format!(
                "model takes {} history rows, got {}",
                hp.history,
                history.rows()
            )));
        }
        let norm = self.normalizer.apply_mat(history)?;
        let out = model.forward(norm.as_slice())?;
        let out_norm = reshape(&out, hp.horizon, history.cols())?;
        self.normalizer.invert_mat(&out_norm)
    }

    /// Future state rows in normalized space.
    pub fn predict_future_normalized(&self, history: &Mat) -> Result<Mat> {
        let (model, hp) = match (&self.params, &self.hyperparams) {
            (ModelParams::Mlp(m), HyperParams::Mlp(hp)) => (m, hp),
            _ => return Err(Error::Config("only the autoregressor predicts future state".into())),
        };
        let norm = self.normalizer.apply_mat(history)?;
        let out = model.forward(norm.as_slice())?;
        reshape(&out, hp.horizon, history.cols())
    }

    pub fn to_json(&self) -> Result<String> {
        let env = ModelEnvelope { schema_version: MODEL_SCHEMA_VERSION, model: self.clone() };
        serde_json::to_string(&env)
            .map_err(|e| Error::Data(format!("model serialization failed: {e}")))
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        // Peek at the version first for a clear message on mismatch.
        #[derive(Deserialize)]
        struct VersionOnly {
            schema_version: u32,
        }
        let v: VersionOnly = serde_json::from_str(raw)
            .map_err(|e| Error::Data(format!("not a model file: {e}")))?;
        if v.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "model schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                v.schema_version
            )));
        }
        let env: ModelEnvelope = serde_json::from_str(raw)
            .map_err(|e| Error::Data(format!("malformed model file: {e}")))?;
        Ok(env.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&raw)
    }
}

fn window_labels(windows: &[WindowSample]) -> Vec<Label> {
    windows.iter().map(|w| w.label).collect()
}

/// Trains a forest on unrolled, normalized windows.
pub fn fit_forest(train: &[WindowSample], hp: &RfHyperParams, seed: u64) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    let norm = Normalizer::fit(train.iter().map(|w| &w.matrix))?;
    let x: Vec<Vec<f64>> = train
        .iter()
        .map(|w| Ok(norm.apply_mat(&w.matrix)?.as_slice().to_vec()))
        .collect::<Result<_>>()?;
    let y = window_labels(train);
    let forest = forest::rf_train(&x, &y, hp, seed)?;
    Ok(TrainedModel {
        family: ModelFamily::Rf,
        params: ModelParams::Rf(forest),
        normalizer: norm,
        hyperparams: HyperParams::Rf(hp.clone()),
        seed,
        training_log: Vec::new(),
    })
}

/// Trains the recurrent classifier with early stopping on `val`.
pub fn fit_sequence(
    train: &[WindowSample],
    val: &[WindowSample],
    hp: &SeqHyperParams,
    seed: u64,
) -> Result<TrainedModel> {
    let out = recurrent::seq_train(train, val, hp, seed)?;
    Ok(TrainedModel {
        family: ModelFamily::Seq,
        params: ModelParams::Seq(out.model),
        normalizer: out.normalizer,
        hyperparams: HyperParams::Seq(hp.clone()),
        seed,
        training_log: out.log,
    })
}

/// Trains the autoregressor with early stopping on `val`.
pub fn fit_autoregressor(
    train: &[WindowSample],
    val: &[WindowSample],
    hp: &MlpHyperParams,
    seed: u64,
) -> Result<TrainedModel> {
    let out = mlp::mlp_train(train, val, hp, seed)?;
    Ok(TrainedModel {
        family: ModelFamily::Mlp,
        params: ModelParams::Mlp(out.model),
        normalizer: out.normalizer,
        hyperparams: HyperParams::Mlp(hp.clone()),
        seed,
        training_log: out.log,
    })
}

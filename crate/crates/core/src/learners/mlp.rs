//! Feed-forward autoregressor for future state prediction.
//!
//! Takes the last H state rows of a window (flattened time-major) and
//! predicts the next F rows in one shot. Two sigmoid hidden layers and
//! a sigmoid output; inputs and targets are min-max normalized, so the
//! output range matches the target range. Trained with Adam on MSE,
//! early stopping on validation MSE.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::adam::{AdamConfig, AdamState};
use crate::learners::normalizer::Normalizer;
use crate::learners::EpochLog;
use crate::mat::Mat;
use crate::rng::{hash_str, rng_from};
use crate::window::WindowSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperParams {
    /// History rows fed to the model.
    pub history: usize,
    /// Future rows predicted.
    pub horizon: usize,
    /// Widths of the two hidden layers.
    pub hidden_dims: [usize; 2],
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for MlpHyperParams {
    fn default() -> Self {
        MlpHyperParams {
            history: 1,
            horizon: 1,
            hidden_dims: [32, 16],
            batch_size: 64,
            learning_rate: 1e-4,
            max_epochs: 10_000,
            patience: 10,
        }
    }
}

impl MlpHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 {
            return Err(Error::Config("history and horizon must be >= 1".into()));
        }
        if self.hidden_dims.iter().any(|d| *d == 0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, max_epochs, patience must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub input_dim: usize,
    pub output_dim: usize,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    w1: Mat,
    b1: Vec<f64>,
    w2: Mat,
    b2: Vec<f64>,
    w3: Mat,
    b3: Vec<f64>,
}

struct MlpCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    out: Vec<f64>,
}

impl MlpRegressor {
    pub fn new(input_dim: usize, output_dim: usize, hidden: [usize; 2], seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|d| *d == 0) {
            return Err(Error::Config("all layer widths must be >= 1".into()));
        }
        let mut rng = rng_from(seed, &[hash_str("mlp-init")]);
        let layer = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let mut m = Mat::zeros(rows, cols);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            for v in m.as_mut_slice() {
                *v = rng.gen_range(-limit..limit);
            }
            m
        };
        use rand::Rng;
        Ok(MlpRegressor {
            input_dim,
            output_dim,
            w1: layer(hidden[0], input_dim, &mut rng),
            b1: vec![0.0; hidden[0]],
            w2: layer(hidden[1], hidden[0], &mut rng),
            b2: vec![0.0; hidden[1]],
            w3: layer(output_dim, hidden[1], &mut rng),
            b3: vec![0.0; output_dim],
        })
    }

    fn forward_cached(&self, x: &[f64]) -> Result<MlpCache> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let act = |m: &Mat, b: &[f64], v: &[f64]| -> Result<Vec<f64>> {
            let mut z = m.matvec(v)?;
            for (zv, bv) in z.iter_mut().zip(b) {
                *zv = sigmoid(*zv + bv);
            }
            Ok(z)
        };
        let a1 = act(&self.w1, &self.b1, x)?;
        let a2 = act(&self.w2, &self.b2, &a1)?;
        let out = act(&self.w3, &self.b3, &a2)?;
        Ok(MlpCache { x: x.to_vec(), a1, a2, out })
    }

    /// Normalized-space prediction for a flattened history.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.out)
    }

    /// MSE loss against a normalized target plus parameter gradients.
    pub fn loss_and_grads(&self, x: &[f64], target: &[f64]) -> Result<(f64, MlpGrads)> {
        if target.len() != self.output_dim {
            return Err(Error::Shape(format!(
                "model predicts {} outputs, target has {}",
                self.output_dim,
                target.len()
            )));
        }
        let cache = self.forward_cached(x)?;
        let k = self.output_dim as f64;
        let mut loss = 0.0;
        let mut dz3 = vec![0.0; self.output_dim];
        for (j, (o, t)) in cache.out.iter().zip(target).enumerate() {
            let diff = o - t;
            loss += diff * diff / k;
            let dout = 2.0 * diff / k;
            dz3[j] = dout * o * (1.0 - o);
        }

        let mut grads = MlpGrads {
            w1: Mat::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Mat::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
            w3: Mat::zeros(self.w3.rows(), self.w3.cols()),
            b3: vec![0.0; self.b3.len()],
        };
        let backprop_layer = |w: &Mat,
                              gw: &mut Mat,
                              gb: &mut Vec<f64>,
                              dz: &[f64],
                              input: &[f64]|
         -> Result<Vec<f64>> {
            for (r, dzr) in dz.iter().enumerate() {
                let row = gw.row_mut(r);
                for (g, iv) in row.iter_mut().zip(input) {
                    *g += dzr * iv;
                }
                gb[r] += dzr;
            }
            w.matvec_t(dz)
        };

        let da2 = backprop_layer(&self.w3, &mut grads.w3, &mut grads.b3, &dz3, &cache.a2)?;
        let dz2: Vec<f64> =
            da2.iter().zip(&cache.a2).map(|(d, a)| d * a * (1.0 - a)).collect();
        let da1 = backprop_layer(&self.w2, &mut grads.w2, &mut grads.b2, &dz2, &cache.a1)?;
        let dz1: Vec<f64> =
            da1.iter().zip(&cache.a1).map(|(d, a)| d * a * (1.0 - a)).collect();
        backprop_layer(&self.w1, &mut grads.w1, &mut grads.b1, &dz1, &cache.x)?;
        Ok((loss, grads))
    }

    pub fn n_params(&self) -> usize {
        self.w1.as_slice().len()
            + self.b1.len()
            + self.w2.as_slice().len()
            + self.b2.len()
            + self.w3.as_slice().len()
            + self.b3.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (m, b) in [(&self.w1, &self.b1), (&self.w2, &self.b2), (&self.w3, &self.b3)] {
            out.extend_from_slice(m.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        };
        take(self.w1.as_mut_slice());
        take(&mut self.b1);
        take(self.w2.as_mut_slice());
        take(&mut self.b2);
        take(self.w3.as_mut_slice());
        take(&mut self.b3);
        Ok(())
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (m, b) in [(&self.w1, &self.b1), (&self.w2, &self.b2), (&self.w3, &self.b3)] {
            out.extend_from_slice(m.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// History/target pair in normalized space.
pub struct ArPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Splits a normalized window into flattened history (rows 0..H) and
/// target (rows H..H+F).
pub fn split_window(norm_matrix: &Mat, history: usize, horizon: usize) -> Result<ArPair> {
    if norm_matrix.rows() < history + horizon {
        return Err(Error::Config(format!(
            "window of {} rows cannot supply history {history} + horizon {horizon}",
            norm_matrix.rows()
        )));
    }
    let input = norm_matrix.slice_rows(0, history)?.as_slice().to_vec();
    let target = norm_matrix.slice_rows(history, horizon)?.as_slice().to_vec();
    Ok(ArPair { input, target })
}

const GRAD_CHUNK: usize = 64;

pub struct MlpTrainOutcome {
    pub model: MlpRegressor,
    pub normalizer: Normalizer,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Trains the autoregressor on sliding windows (state layout). The
/// validation score logged per epoch is the negated MSE so that
/// "higher is better" holds across all learners' logs.
pub fn mlp_train(
    train: &[WindowSample],
    val: &[WindowSample],
    hp: &MlpHyperParams,
    seed: u64,
) -> Result<MlpTrainOutcome> {
    hp.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation windows must be non-empty".into()));
    }
    let width = train[0].matrix.cols();
    let norm = Normalizer::fit(train.iter().map(|w| &w.matrix))?;
    let pairs = |ws: &[WindowSample]| -> Result<Vec<ArPair>> {
        ws.iter()
            .map(|w| split_window(&norm.apply_mat(&w.matrix)?, hp.history, hp.horizon))
            .collect()
    };
    let train_set = pairs(train)?;
    let val_set = pairs(val)?;

    let mut model =
        MlpRegressor::new(width * hp.history, width * hp.horizon, hp.hidden_dims, seed)?;
    let mut flat = model.flatten();
    let mut adam = AdamState::new(flat.len());
    let adam_cfg = AdamConfig::with_learning_rate(hp.learning_rate);

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut since_best = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=hp.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_from(seed, &[hash_str("mlp-shuffle"), epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(hp.batch_size) {
            let partials: Vec<Result<(f64, Vec<f64>)>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut loss_sum = 0.0;
                    let mut grad_sum = vec![0.0; flat.len()];
                    for &i in chunk {
                        let (loss, grads) =
                            model.loss_and_grads(&train_set[i].input, &train_set[i].target)?;
                        loss_sum += loss;
                        for (g, s) in grad_sum.iter_mut().zip(grads.flatten()) {
                            *g += s;
                        }
                    }
                    Ok((loss_sum, grad_sum))
                })
                .collect();

            let mut grad = vec![0.0; flat.len()];
            let mut batch_loss = 0.0;
            for p in partials {
                let (l, g) = p?;
                batch_loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            adam.step(&mut flat, &grad, &adam_cfg)?;
            model.unflatten(&flat)?;
            epoch_loss += batch_loss;
            seen += batch.len();
        }

        let val_mse = {
            let partials: Vec<Result<f64>> = val_set
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut sum = 0.0;
                    for pair in chunk {
                        let out = model.forward(&pair.input)?;
                        let k = out.len() as f64;
                        for (o, t) in out.iter().zip(&pair.target) {
                            sum += (o - t) * (o - t) / k;
                        }
                    }
                    Ok(sum)
                })
                .collect();
            let mut total = 0.0;
            for p in partials {
                total += p?;
            }
            total / val_set.len() as f64
        };
        log.push(EpochLog { epoch, train_loss: epoch_loss / seen as f64, val_score: -val_mse });

        if best.as_ref().map_or(true, |(b, _, _)| -val_mse > *b) {
            best = Some((-val_mse, flat.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hp.patience {
                break;
            }
        }
    }

    let (_, best_flat, best_epoch) = best.expect("at least one epoch ran");
    model.unflatten(&best_flat)?;
    Ok(MlpTrainOutcome { model, normalizer: norm, log, best_epoch })
}

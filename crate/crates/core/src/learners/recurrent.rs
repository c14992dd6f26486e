//! Stacked recurrent sequence classifier trained with backprop
//! through time.
//!
//! Architecture: `depth` LSTM layers, dropout on the hidden outputs
//! between layers and on the final hidden state, then a one-hidden-
//! layer ReLU head producing a single logit. The loss is binary
//! cross-entropy on the logit; optimization is Adam with early
//! stopping on validation ranking quality.
//!
//! Everything is deterministic in the seed: initialization, epoch
//! shuffles, and per-sample dropout masks each draw from their own
//! derived stream, and batch gradients are reduced over fixed-size
//! chunks so the result does not depend on worker count.

use rand::seq::SliceRandom;
use rand::Rng;
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
pub struct SeqHyperParams {
    /// Number of stacked recurrent layers.
    pub depth: usize,
    /// Dropout rate between layers and before the head.
    pub dropout: f64,
    /// Hidden state width of every layer.
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for SeqHyperParams {
    fn default() -> Self {
        SeqHyperParams {
            depth: 1,
            dropout: 0.1,
            hidden_dim: 32,
            batch_size: 256,
            learning_rate: 1e-4,
            max_epochs: 1000,
            patience: 5,
        }
    }
}

impl SeqHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("depth and hidden_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
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

/// Binary cross-entropy straight from the logit, numerically stable
/// for large |z|.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Glorot-uniform fill: limit sqrt(6 / (fan_in + fan_out)).
fn glorot(m: &mut Mat, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in m.as_mut_slice() {
        *v = rng.gen_range(-limit..limit);
    }
}

/// One LSTM layer. Gate rows are stacked [input, forget, cell, output]
/// in both weight matrices and the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// 4H x input_dim.
    pub w_ih: Mat,
    /// 4H x H.
    pub w_hh: Mat,
    /// 4H.
    pub bias: Vec<f64>,
}

impl LstmCell {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w_ih = Mat::zeros(4 * hidden_dim, input_dim);
        let mut w_hh = Mat::zeros(4 * hidden_dim, hidden_dim);
        glorot(&mut w_ih, input_dim, hidden_dim, rng);
        glorot(&mut w_hh, hidden_dim, hidden_dim, rng);
        let mut bias = vec![0.0; 4 * hidden_dim];
        // Forget gate starts open so early training can carry state.
        bias[hidden_dim..2 * hidden_dim].fill(1.0);
        LstmCell { input_dim, hidden_dim, w_ih, w_hh, bias }
    }
}

/// Everything the backward pass needs about one forward step.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c_new: Vec<f64>,
}

fn cell_forward_cached(
    cell: &LstmCell,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    let hd = cell.hidden_dim;
    if x.len() != cell.input_dim || h.len() != hd || c.len() != hd {
        return Err(Error::Shape(format!(
            "cell expects input {} / state {}, got {} / {} / {}",
            cell.input_dim,
            hd,
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let mut z = cell.w_ih.matvec(x)?;
    let zh = cell.w_hh.matvec(h)?;
    for (a, (b, bias)) in z.iter_mut().zip(zh.iter().zip(&cell.bias)) {
        *a += b + bias;
    }
    let mut gi = vec![0.0; hd];
    let mut gf = vec![0.0; hd];
    let mut gg = vec![0.0; hd];
    let mut go = vec![0.0; hd];
    let mut c_new = vec![0.0; hd];
    let mut tanh_c_new = vec![0.0; hd];
    let mut h_new = vec![0.0; hd];
    for k in 0..hd {
        gi[k] = sigmoid(z[k]);
        gf[k] = sigmoid(z[hd + k]);
        gg[k] = z[2 * hd + k].tanh();
        go[k] = sigmoid(z[3 * hd + k]);
        c_new[k] = gf[k] * c[k] + gi[k] * gg[k];
        tanh_c_new[k] = c_new[k].tanh();
        h_new[k] = go[k] * tanh_c_new[k];
    }
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        i: gi,
        f: gf,
        g: gg,
        o: go,
        tanh_c_new,
    };
    Ok((h_new, c_new, cache))
}

/// One recurrence step: gates from the current input and previous
/// hidden state, new cell state `f*c + i*g`, new hidden `o * tanh(c')`.
pub fn cell_forward(cell: &LstmCell, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h_new, c_new, _) = cell_forward_cached(cell, x, h, c)?;
    Ok((h_new, c_new))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub w_ih: Mat,
    pub w_hh: Mat,
    pub bias: Vec<f64>,
}

impl CellGrads {
    fn zeros(cell: &LstmCell) -> Self {
        CellGrads {
            w_ih: Mat::zeros(4 * cell.hidden_dim, cell.input_dim),
            w_hh: Mat::zeros(4 * cell.hidden_dim, cell.hidden_dim),
            bias: vec![0.0; 4 * cell.hidden_dim],
        }
    }
}

/// Backward through one step. Returns (dx, dh_prev, dc_prev) and
/// accumulates parameter gradients into `grads`.
fn cell_backward(
    cell: &LstmCell,
    cache: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
    grads: &mut CellGrads,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let hd = cell.hidden_dim;
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let tch = cache.tanh_c_new[k];
        let d_o = dh[k] * tch;
        let dc = dc_next[k] + dh[k] * cache.o[k] * (1.0 - tch * tch);
        let di = dc * cache.g[k];
        let df = dc * cache.c_prev[k];
        let dg = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
        dz[hd + k] = df * cache.f[k] * (1.0 - cache.f[k]);
        dz[2 * hd + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
        dz[3 * hd + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
    }
    for r in 0..4 * hd {
        let dzr = dz[r];
        let wrow = grads.w_ih.row_mut(r);
        for (w, xv) in wrow.iter_mut().zip(&cache.x) {
            *w += dzr * xv;
        }
        let hrow = grads.w_hh.row_mut(r);
        for (w, hv) in hrow.iter_mut().zip(&cache.h_prev) {
            *w += dzr * hv;
        }
        grads.bias[r] += dzr;
    }
    let dx = cell.w_ih.matvec_t(&dz)?;
    let dh_prev = cell.w_hh.matvec_t(&dz)?;
    Ok((dx, dh_prev, dc_prev))
}

/// Post-recurrent classification head: one ReLU hidden layer, scalar
/// logit output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    pub hidden_dim: usize,
    /// H x H.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// H.
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl DenseHead {
    fn new(hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w1 = Mat::zeros(hidden_dim, hidden_dim);
        glorot(&mut w1, hidden_dim, hidden_dim, rng);
        let limit = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let w2 = (0..hidden_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        DenseHead { hidden_dim, w1, b1: vec![0.0; hidden_dim], w2, b2: 0.0 }
    }
}

#[derive(Clone, Debug)]
struct HeadCache {
    h: Vec<f64>,
    pre1: Vec<f64>,
    a1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct HeadGrads {
    w1: Mat,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl HeadGrads {
    fn zeros(hd: usize) -> Self {
        HeadGrads { w1: Mat::zeros(hd, hd), b1: vec![0.0; hd], w2: vec![0.0; hd], b2: 0.0 }
    }
}

fn head_forward(head: &DenseHead, h: &[f64]) -> Result<(f64, HeadCache)> {
    let pre1 = {
        let mut z = head.w1.matvec(h)?;
        for (zv, b) in z.iter_mut().zip(&head.b1) {
            *zv += b;
        }
        z
    };
    let a1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
    let mut logit = head.b2;
    for (w, a) in head.w2.iter().zip(&a1) {
        logit += w * a;
    }
    Ok((logit, HeadCache { h: h.to_vec(), pre1, a1 }))
}

fn head_backward(head: &DenseHead, cache: &HeadCache, dlogit: f64, grads: &mut HeadGrads) -> Result<Vec<f64>> {
    grads.b2 += dlogit;
    let mut dpre1 = vec![0.0; head.hidden_dim];
    for k in 0..head.hidden_dim {
        grads.w2[k] += dlogit * cache.a1[k];
        let da = dlogit * head.w2[k];
        dpre1[k] = if cache.pre1[k] > 0.0 { da } else { 0.0 };
    }
    for r in 0..head.hidden_dim {
        let row = grads.w1.row_mut(r);
        for (w, hv) in row.iter_mut().zip(&cache.h) {
            *w += dpre1[r] * hv;
        }
        grads.b1[r] += dpre1[r];
    }
    head.w1.matvec_t(&dpre1)
}

/// Full classifier: stacked cells plus head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqClassifier {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub cells: Vec<LstmCell>,
    pub head: DenseHead,
}

#[derive(Clone, Debug)]
struct NetCache {
    /// [layer][t]
    steps: Vec<Vec<StepCache>>,
    /// Dropout masks applied to layer outputs feeding the next layer;
    /// empty in eval mode. [layer][t][unit]
    inter_masks: Vec<Vec<Vec<f64>>>,
    /// Mask on the final hidden state before the head; empty in eval.
    final_mask: Vec<f64>,
    head: HeadCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqGrads {
    cells: Vec<CellGrads>,
    head: HeadGrads,
}

impl SeqClassifier {
    pub fn new(input_dim: usize, hp: &SeqHyperParams, seed: u64) -> Result<Self> {
        hp.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        let mut rng = rng_from(seed, &[hash_str("seq-init")]);
        let cells = (0..hp.depth)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hp.hidden_dim };
                LstmCell::new(in_dim, hp.hidden_dim, &mut rng)
            })
            .collect();
        let head = DenseHead::new(hp.hidden_dim, &mut rng);
        Ok(SeqClassifier { input_dim, hidden_dim: hp.hidden_dim, cells, head })
    }

    pub fn n_params(&self) -> usize {
        let cell = |c: &LstmCell| {
            c.w_ih.as_slice().len() + c.w_hh.as_slice().len() + c.bias.len()
        };
        self.cells.iter().map(cell).sum::<usize>()
            + self.head.w1.as_slice().len()
            + self.head.b1.len()
            + self.head.w2.len()
            + 1
    }

    /// All parameters as one flat vector (cells in order, then head).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for c in &self.cells {
            out.extend_from_slice(c.w_ih.as_slice());
            out.extend_from_slice(c.w_hh.as_slice());
            out.extend_from_slice(&c.bias);
        }
        out.extend_from_slice(self.head.w1.as_slice());
        out.extend_from_slice(&self.head.b1);
        out.extend_from_slice(&self.head.w2);
        out.push(self.head.b2);
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
        for c in &mut self.cells {
            take(c.w_ih.as_mut_slice());
            take(c.w_hh.as_mut_slice());
            take(&mut c.bias);
        }
        take(self.head.w1.as_mut_slice());
        take(&mut self.head.b1);
        take(&mut self.head.w2);
        self.head.b2 = flat[at];
        Ok(())
    }

    fn forward_inner(
        &self,
        x: &Mat,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, NetCache)> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "sequence has {} features, model expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        if x.rows() == 0 {
            return Err(Error::Data("empty sequence".into()));
        }
        let t_len = x.rows();
        let hd = self.hidden_dim;
        let keep = 1.0 - dropout;
        let draw_mask = |rng: &mut Option<&mut ChaCha8Rng>| -> Vec<f64> {
            match rng {
                Some(r) if dropout > 0.0 => (0..hd)
                    .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
                _ => Vec::new(),
            }
        };

        let mut inputs: Vec<Vec<f64>> = (0..t_len).map(|t| x.row(t).to_vec()).collect();
        let mut steps = Vec::with_capacity(self.cells.len());
        let mut inter_masks = Vec::new();
        for (l, cell) in self.cells.iter().enumerate() {
            let mut h = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            let mut layer_steps = Vec::with_capacity(t_len);
            let mut outputs = Vec::with_capacity(t_len);
            for input in &inputs {
                let (h_new, c_new, cache) = cell_forward_cached(cell, input, &h, &c)?;
                layer_steps.push(cache);
                outputs.push(h_new.clone());
                h = h_new;
                c = c_new;
            }
            steps.push(layer_steps);
            if l + 1 < self.cells.len() {
                let mut masks = Vec::with_capacity(t_len);
                for out in outputs.iter_mut() {
                    let mask = draw_mask(&mut rng);
                    if !mask.is_empty() {
                        for (v, m) in out.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                    }
                    masks.push(mask);
                }
                inter_masks.push(masks);
                inputs = outputs;
            } else {
                inputs = outputs;
            }
        }

        let mut final_h = inputs.pop().expect("at least one timestep");
        let final_mask = draw_mask(&mut rng);
        if !final_mask.is_empty() {
            for (v, m) in final_h.iter_mut().zip(&final_mask) {
                *v *= m;
            }
        }
        let (logit, head_cache) = head_forward(&self.head, &final_h)?;
        Ok((logit, NetCache { steps, inter_masks, final_mask, head: head_cache }))
    }

    /// Deterministic eval-mode logit (dropout off).
    pub fn forward_logit(&self, x: &Mat) -> Result<f64> {
        Ok(self.forward_inner(x, 0.0, None)?.0)
    }

    /// Train-mode forward plus full backward for one sample. Returns
    /// the loss and the parameter gradients.
    pub fn loss_and_grads(
        &self,
        x: &Mat,
        y: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, SeqGrads)> {
        let (logit, cache) = self.forward_inner(x, dropout, Some(rng))?;
        let loss = bce_with_logit(logit, y);
        let dlogit = sigmoid(logit) - y;

        let mut grads = SeqGrads {
            cells: self.cells.iter().map(CellGrads::zeros).collect(),
            head: HeadGrads::zeros(self.hidden_dim),
        };
        let mut dh_final = head_backward(&self.head, &cache.head, dlogit, &mut grads.head)?;
        if !cache.final_mask.is_empty() {
            for (v, m) in dh_final.iter_mut().zip(&cache.final_mask) {
                *v *= m;
            }
        }

        let t_len = x.rows();
        let hd = self.hidden_dim;
        // dh_seq[t]: gradient flowing into layer output at step t from
        // above (next layer or head).
        let mut dh_seq: Vec<Vec<f64>> = vec![vec![0.0; hd]; t_len];
        dh_seq[t_len - 1] = dh_final;
        for l in (0..self.cells.len()).rev() {
            let cell = &self.cells[l];
            let mut dh_next = vec![0.0; hd];
            let mut dc_next = vec![0.0; hd];
            let mut dx_seq: Vec<Vec<f64>> = vec![Vec::new(); t_len];
            for t in (0..t_len).rev() {
                let mut dh = dh_seq[t].clone();
                for (a, b) in dh.iter_mut().zip(&dh_next) {
                    *a += b;
                }
                let (dx, dh_prev, dc_prev) =
                    cell_backward(cell, &cache.steps[l][t], &dh, &dc_next, &mut grads.cells[l])?;
                dx_seq[t] = dx;
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            if l > 0 {
                // Pass dx through the dropout applied to layer l-1
                // outputs on the way up.
                let masks = &cache.inter_masks[l - 1];
                for t in 0..t_len {
                    let mut dx = std::mem::take(&mut dx_seq[t]);
                    if !masks[t].is_empty() {
                        for (v, m) in dx.iter_mut().zip(&masks[t]) {
                            *v *= m;
                        }
                    }
                    dh_seq[t] = dx;
                }
            }
        }
        Ok((loss, grads))
    }
}

impl SeqGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.cells {
            out.extend_from_slice(c.w_ih.as_slice());
            out.extend_from_slice(c.w_hh.as_slice());
            out.extend_from_slice(&c.bias);
        }
        out.extend_from_slice(self.head.w1.as_slice());
        out.extend_from_slice(&self.head.b1);
        out.extend_from_slice(&self.head.w2);
        out.push(self.head.b2);
        out
    }
}

/// Windows prepared for training: normalized matrix plus target bit.
fn prepare(windows: &[WindowSample], norm: &Normalizer) -> Result<Vec<(Mat, f64)>> {
    windows
        .iter()
        .map(|w| Ok((norm.apply_mat(&w.matrix)?, w.label.as_f64())))
        .collect()
}

fn check_two_classes(windows: &[WindowSample], name: &str) -> Result<()> {
    let pos = windows.iter().filter(|w| w.label.as_f64() > 0.5).count();
    if windows.is_empty() || pos == 0 || pos == windows.len() {
        return Err(Error::Data(format!("{name} windows must contain both classes")));
    }
    Ok(())
}

/// Gradient accumulation chunk; fixed so reductions are independent of
/// worker count.
const GRAD_CHUNK: usize = 32;

pub struct SeqTrainOutcome {
    pub model: SeqClassifier,
    pub normalizer: Normalizer,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Trains a sequence classifier with Adam and early stopping on
/// validation ranking quality (higher is better). The weights returned
/// are those of the best validation epoch, not the last one.
pub fn seq_train(
    train: &[WindowSample],
    val: &[WindowSample],
    hp: &SeqHyperParams,
    seed: u64,
) -> Result<SeqTrainOutcome> {
    hp.validate()?;
    check_two_classes(train, "training")?;
    check_two_classes(val, "validation")?;
    let input_dim = train[0].matrix.cols();

    let norm = Normalizer::fit(train.iter().map(|w| &w.matrix))?;
    let train_set = prepare(train, &norm)?;
    let val_set = prepare(val, &norm)?;
    let val_labels: Vec<crate::scene::Label> = val.iter().map(|w| w.label).collect();

    let mut model = SeqClassifier::new(input_dim, hp, seed)?;
    let mut flat = model.flatten();
    let mut adam = AdamState::new(flat.len());
    let adam_cfg = AdamConfig::with_learning_rate(hp.learning_rate);

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut since_best = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=hp.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_from(seed, &[hash_str("seq-shuffle"), epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(hp.batch_size) {
            // Per-sample gradient work is parallel; the reduction
            // walks fixed-size chunks in order, so sums are bit-stable.
            let partials: Vec<Result<(f64, Vec<f64>)>> = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(chunk_i, chunk)| {
                    let mut loss_sum = 0.0;
                    let mut grad_sum = vec![0.0; flat.len()];
                    for (k, &sample_i) in chunk.iter().enumerate() {
                        let global = chunk_i * GRAD_CHUNK + k;
                        let mut dropout_rng = rng_from(
                            seed,
                            &[hash_str("seq-dropout"), epoch as u64, global as u64, sample_i as u64],
                        );
                        let (x, y) = &train_set[sample_i];
                        let (loss, grads) =
                            model.loss_and_grads(x, *y, hp.dropout, &mut dropout_rng)?;
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
            let scale = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            adam.step(&mut flat, &grad, &adam_cfg)?;
            model.unflatten(&flat)?;
            epoch_loss += batch_loss;
            seen += batch.len();
        }

        let scores: Vec<f64> = val_set
            .par_iter()
            .map(|(x, _)| model.forward_logit(x))
            .collect::<Result<Vec<f64>>>()?;
        let val_score = crate::eval::metrics::roc_auc(&scores, &val_labels)?;
        log.push(EpochLog { epoch, train_loss: epoch_loss / seen as f64, val_score });

        if best.as_ref().map_or(true, |(b, _, _)| val_score > *b) {
            best = Some((val_score, flat.clone(), epoch));
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
    Ok(SeqTrainOutcome { model, normalizer: norm, log, best_epoch })
}

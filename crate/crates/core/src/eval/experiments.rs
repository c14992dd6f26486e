//! Experiment drivers: repeated-split classification, test-time
//! degradation sweeps, and the autoregression horizon grid.
//!
//! Every driver follows the same protocol. Scenes are split 70/10/20
//! at scene level (stratified by label), windows are cut per part,
//! hyperparameters are chosen by cross validation on the training
//! windows only, the winner is retrained and scored on the held-out
//! test windows, and the whole procedure repeats with independent
//! splits. Per-repeat seeds derive from (master seed, repeat index),
//! so extending `repeats` never changes earlier repeats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::grid::{grid_search, ClassifierGrid, ConfigScore};
use crate::eval::metrics::{mean_std, pr_auc, roc_auc, threshold_metrics};
use crate::learners::{
    fit_autoregressor, fit_forest, fit_sequence, HyperParams, MlpHyperParams, ModelFamily,
    TrainedModel,
};
use crate::rng::{derive_seed, hash_str};
use crate::scene::{Label, Scene, VariantKind};
use crate::window::{degrade, impute_last_known, slide_all, split_scenes, WindowSample};

/// Probability cut for the confusion-matrix metrics. Classes are
/// balanced by construction, so the natural midpoint is used.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Human-readable class names used in reports and CSV output.
pub fn class_name(label: Label) -> &'static str {
    match label {
        Label::Human => "human",
        Label::Autonomous => "autonomous",
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// The six classification scores reported per evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub auroc: f64,
    pub aupr: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassificationScores {
    pub fn compute(scores: &[f64], labels: &[Label]) -> Result<Self> {
        let auroc = roc_auc(scores, labels)?;
        let aupr = pr_auc(scores, labels)?;
        let t = threshold_metrics(scores, labels, DECISION_THRESHOLD)?;
        Ok(Self {
            auroc,
            aupr,
            accuracy: t.accuracy,
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
        })
    }

    fn as_array(&self) -> [f64; 6] {
        [self.auroc, self.aupr, self.accuracy, self.precision, self.recall, self.f1]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self { auroc: a[0], aupr: a[1], accuracy: a[2], precision: a[3], recall: a[4], f1: a[5] }
    }

    /// Elementwise mean and population std over repeats.
    pub fn aggregate(rows: &[Self]) -> (Self, Self) {
        let mut means = [0.0; 6];
        let mut stds = [0.0; 6];
        for k in 0..6 {
            let col: Vec<f64> = rows.iter().map(|r| r.as_array()[k]).collect();
            let (m, s) = mean_std(&col);
            means[k] = m;
            stds[k] = s;
        }
        (Self::from_array(means), Self::from_array(stds))
    }
}

fn score_windows(model: &TrainedModel, windows: &[WindowSample]) -> Result<ClassificationScores> {
    let scores = model.predict_proba_batch(windows)?;
    let labels: Vec<Label> = windows.iter().map(|w| w.label).collect();
    ClassificationScores::compute(&scores, &labels)
}

fn fit_final(
    grid: &ClassifierGrid,
    chosen: &HyperParams,
    train: &[WindowSample],
    val: &[WindowSample],
    seed: u64,
) -> Result<TrainedModel> {
    match (grid, chosen) {
        (ClassifierGrid::Rf(_), HyperParams::Rf(hp)) => fit_forest(train, hp, seed),
        (ClassifierGrid::Seq { .. }, HyperParams::Seq(hp)) => fit_sequence(train, val, hp, seed),
        _ => Err(Error::Config("grid family does not match chosen hyperparameters".into())),
    }
}

pub fn grid_family(grid: &ClassifierGrid) -> ModelFamily {
    match grid {
        ClassifierGrid::Rf(_) => ModelFamily::Rf,
        ClassifierGrid::Seq { .. } => ModelFamily::Seq,
    }
}

struct RepeatData {
    train: Vec<WindowSample>,
    val: Vec<WindowSample>,
    test: Vec<WindowSample>,
}

fn repeat_windows(
    scenes: &[Scene],
    kind: VariantKind,
    window: usize,
    stride: usize,
    master_seed: u64,
    repeat: usize,
) -> Result<RepeatData> {
    let plan = split_scenes(scenes, derive_seed(master_seed, &[hash_str("split"), repeat as u64]))?;
    let cut = |ids: &[String]| -> Result<Vec<WindowSample>> {
        let part: Vec<Scene> = plan.select(scenes, ids).into_iter().cloned().collect();
        slide_all(&part, kind, window, stride)
    };
    Ok(RepeatData {
        train: cut(&plan.train_ids)?,
        val: cut(&plan.val_ids)?,
        test: cut(&plan.test_ids)?,
    })
}

// ---------------------------------------------------------------- //
// Classification                                                   //
// ---------------------------------------------------------------- //

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub kind: VariantKind,
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub cv_folds: usize,
    pub grid: ClassifierGrid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub chosen: HyperParams,
    pub grid_scores: Vec<ConfigScore>,
    pub scores: ClassificationScores,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub family: ModelFamily,
    pub kind: VariantKind,
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub cv_folds: usize,
    pub master_seed: u64,
    pub grid_size: usize,
    pub per_repeat: Vec<RepeatOutcome>,
    pub mean: ClassificationScores,
    pub std: ClassificationScores,
}

fn check_common(repeats: usize, window: usize, stride: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    Ok(())
}

/// Repeated-split classification: split, grid-search on train,
/// retrain the winner, score on test; aggregate over repeats.
pub fn run_classification(
    scenes: &[Scene],
    opts: &ClassifyOptions,
    master_seed: u64,
) -> Result<ClassificationReport> {
    check_common(opts.repeats, opts.window, opts.stride)?;
    let mut per_repeat = Vec::with_capacity(opts.repeats);
    for r in 0..opts.repeats {
        let data = repeat_windows(scenes, opts.kind, opts.window, opts.stride, master_seed, r)?;
        let (chosen, grid_scores) = grid_search(
            &opts.grid,
            &data.train,
            opts.cv_folds,
            derive_seed(master_seed, &[hash_str("grid"), r as u64]),
        )?;
        let model = fit_final(
            &opts.grid,
            &chosen,
            &data.train,
            &data.val,
            derive_seed(master_seed, &[hash_str("final"), r as u64]),
        )?;
        let scores = score_windows(&model, &data.test)?;
        per_repeat.push(RepeatOutcome {
            repeat: r,
            chosen,
            grid_scores,
            scores,
            train_windows: data.train.len(),
            val_windows: data.val.len(),
            test_windows: data.test.len(),
        });
    }
    let rows: Vec<ClassificationScores> = per_repeat.iter().map(|r| r.scores).collect();
    let (mean, std) = ClassificationScores::aggregate(&rows);
    Ok(ClassificationReport {
        family: grid_family(&opts.grid),
        kind: opts.kind,
        window: opts.window,
        stride: opts.stride,
        repeats: opts.repeats,
        cv_folds: opts.cv_folds,
        master_seed,
        grid_size: opts.grid.len(),
        per_repeat,
        mean,
        std,
    })
}

// ---------------------------------------------------------------- //
// Degradation                                                      //
// ---------------------------------------------------------------- //

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegradeOptions {
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub cv_folds: usize,
    pub grid: ClassifierGrid,
    /// Drop rates to sweep, each strictly inside (0, 1). The clean
    /// baseline r = 0 is always prepended.
    pub rates: Vec<f64>,
}

pub fn default_drop_rates() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegradationRow {
    pub rate: f64,
    pub per_repeat: Vec<ClassificationScores>,
    pub mean: ClassificationScores,
    pub std: ClassificationScores,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegradationReport {
    pub family: ModelFamily,
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub cv_folds: usize,
    pub master_seed: u64,
    pub chosen: Vec<HyperParams>,
    pub rows: Vec<DegradationRow>,
}

/// Trains once per repeat on clean data (feature layout is always the
/// state+detection concatenation), then scores the same model on the
/// clean test windows and on each degraded-and-imputed variant.
pub fn run_degradation(
    scenes: &[Scene],
    opts: &DegradeOptions,
    master_seed: u64,
) -> Result<DegradationReport> {
    check_common(opts.repeats, opts.window, opts.stride)?;
    if opts.rates.is_empty() {
        return Err(Error::Config("no drop rates requested".into()));
    }
    for &r in &opts.rates {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("drop rate {r} outside (0, 1)")));
        }
    }

    let kind = VariantKind::SPlusD;
    let mut chosen_per_repeat = Vec::with_capacity(opts.repeats);
    // scores[rate_index][repeat]
    let mut scores: Vec<Vec<ClassificationScores>> = vec![Vec::new(); opts.rates.len() + 1];
    for rep in 0..opts.repeats {
        let data = repeat_windows(scenes, kind, opts.window, opts.stride, master_seed, rep)?;
        let (chosen, _) = grid_search(
            &opts.grid,
            &data.train,
            opts.cv_folds,
            derive_seed(master_seed, &[hash_str("grid"), rep as u64]),
        )?;
        let model = fit_final(
            &opts.grid,
            &chosen,
            &data.train,
            &data.val,
            derive_seed(master_seed, &[hash_str("final"), rep as u64]),
        )?;
        chosen_per_repeat.push(chosen);

        scores[0].push(score_windows(&model, &data.test)?);
        for (i, &rate) in opts.rates.iter().enumerate() {
            let masked = degrade(
                &data.test,
                rate,
                derive_seed(master_seed, &[hash_str("degrade"), rep as u64, i as u64]),
            )?;
            let imputed: Vec<WindowSample> =
                masked.iter().map(impute_last_known).collect::<Result<_>>()?;
            scores[i + 1].push(score_windows(&model, &imputed)?);
        }
    }

    let mut rows = Vec::with_capacity(opts.rates.len() + 1);
    for (i, per_repeat) in scores.into_iter().enumerate() {
        let rate = if i == 0 { 0.0 } else { opts.rates[i - 1] };
        let (mean, std) = ClassificationScores::aggregate(&per_repeat);
        rows.push(DegradationRow { rate, per_repeat, mean, std });
    }
    Ok(DegradationReport {
        family: grid_family(&opts.grid),
        window: opts.window,
        stride: opts.stride,
        repeats: opts.repeats,
        cv_folds: opts.cv_folds,
        master_seed,
        chosen: chosen_per_repeat,
        rows,
    })
}

// ---------------------------------------------------------------- //
// Autoregression                                                   //
// ---------------------------------------------------------------- //

/// Optimizer and architecture settings shared by every (H, F) cell.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MlpTrainSettings {
    pub hidden_dims: [usize; 2],
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for MlpTrainSettings {
    fn default() -> Self {
        let d = MlpHyperParams::default();
        Self {
            hidden_dims: d.hidden_dims,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutoregressOptions {
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub history_values: Vec<usize>,
    pub future_values: Vec<usize>,
    pub settings: MlpTrainSettings,
}

pub fn default_history_values() -> Vec<usize> {
    vec![1, 2, 4, 6, 8, 10, 12]
}

pub fn default_future_values() -> Vec<usize> {
    vec![1, 2, 4, 6, 8]
}

pub const STATE_FEATURE_NAMES: [&str; 5] = ["range", "speed", "accel", "lane_offset", "yaw"];

/// One (H, F) cell evaluated in one repeat. RMSE values are pooled
/// over every predicted element of every test window; the per-class
/// values split the same pool by window label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoregressCellRepeat {
    pub repeat: usize,
    pub rmse_norm: f64,
    pub rmse_phys: f64,
    pub rmse_phys_per_feature: Vec<f64>,
    pub rmse_norm_human: f64,
    pub rmse_norm_autonomous: f64,
    pub rmse_phys_human: f64,
    pub rmse_phys_autonomous: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutoregressCell {
    pub history: usize,
    pub future: usize,
    pub per_repeat: Vec<AutoregressCellRepeat>,
    pub rmse_norm: MeanStd,
    pub rmse_phys: MeanStd,
    pub rmse_phys_per_feature: Vec<MeanStd>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkippedCell {
    pub history: usize,
    pub future: usize,
    pub reason: String,
}

/// Per-class predictability summary: normalized and physical RMSE per
/// repeat, averaged over every evaluated (H, F) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassComparisonRow {
    pub repeat: usize,
    pub rmse_norm_human: f64,
    pub rmse_norm_autonomous: f64,
    pub rmse_phys_human: f64,
    pub rmse_phys_autonomous: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassComparison {
    pub per_repeat: Vec<ClassComparisonRow>,
    pub rmse_norm_human: MeanStd,
    pub rmse_norm_autonomous: MeanStd,
    pub rmse_phys_human: MeanStd,
    pub rmse_phys_autonomous: MeanStd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutoregressionReport {
    pub window: usize,
    pub stride: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub history_values: Vec<usize>,
    pub future_values: Vec<usize>,
    pub settings: MlpTrainSettings,
    pub feature_names: Vec<String>,
    pub cells: Vec<AutoregressCell>,
    pub skipped: Vec<SkippedCell>,
    pub class_comparison: ClassComparison,
}

struct CellAccum {
    norm_sq: f64,
    norm_n: usize,
    phys_sq_per_col: Vec<f64>,
    phys_rows: usize,
    by_class: [(f64, f64, usize); 2], // (norm_sq, phys_sq, element count) per label bit
}

fn eval_cell(
    model: &TrainedModel,
    test: &[WindowSample],
    history: usize,
    future: usize,
    repeat: usize,
) -> Result<AutoregressCellRepeat> {
    let cols = test.first().map_or(0, |w| w.matrix.cols());
    let mut acc = CellAccum {
        norm_sq: 0.0,
        norm_n: 0,
        phys_sq_per_col: vec![0.0; cols],
        phys_rows: 0,
        by_class: [(0.0, 0.0, 0); 2],
    };
    for w in test {
        let hist = w.matrix.slice_rows(0, history)?;
        let target = w.matrix.slice_rows(history, future)?;
        let pred_n = model.predict_future_normalized(&hist)?;
        let target_n = model.normalizer.apply_mat(&target)?;
        let pred_p = model.normalizer.invert_mat(&pred_n)?;
        let class = &mut acc.by_class[w.label.as_bit() as usize];
        for i in 0..future {
            for c in 0..cols {
                let dn = pred_n.get(i, c) - target_n.get(i, c);
                let dp = pred_p.get(i, c) - target.get(i, c);
                if !(dn.is_finite() && dp.is_finite()) {
                    return Err(Error::non_finite("autoregression prediction"));
                }
                acc.norm_sq += dn * dn;
                acc.phys_sq_per_col[c] += dp * dp;
                class.0 += dn * dn;
                class.1 += dp * dp;
                class.2 += 1;
            }
        }
        acc.norm_n += future * cols;
        acc.phys_rows += future;
    }
    if acc.norm_n == 0 {
        return Err(Error::Data("no test windows to evaluate".into()));
    }
    let (h, a) = (acc.by_class[0], acc.by_class[1]);
    if h.2 == 0 || a.2 == 0 {
        return Err(Error::Data("class comparison needs both classes in the test split".into()));
    }
    let phys_total: f64 = acc.phys_sq_per_col.iter().sum();
    Ok(AutoregressCellRepeat {
        repeat,
        rmse_norm: (acc.norm_sq / acc.norm_n as f64).sqrt(),
        rmse_phys: (phys_total / acc.norm_n as f64).sqrt(),
        rmse_phys_per_feature: acc
            .phys_sq_per_col
            .iter()
            .map(|s| (s / acc.phys_rows as f64).sqrt())
            .collect(),
        rmse_norm_human: (h.0 / h.2 as f64).sqrt(),
        rmse_norm_autonomous: (a.0 / a.2 as f64).sqrt(),
        rmse_phys_human: (h.1 / h.2 as f64).sqrt(),
        rmse_phys_autonomous: (a.1 / a.2 as f64).sqrt(),
    })
}

/// Per-class RMSE averaged over all evaluated cells, per repeat, with
/// mean and std across repeats.
pub fn compare_classes(cells: &[AutoregressCell], repeats: usize) -> Result<ClassComparison> {
    if cells.is_empty() {
        return Err(Error::Data("no evaluated cells to compare classes on".into()));
    }
    let mut per_repeat = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut sums = [0.0f64; 4];
        for cell in cells {
            let row = &cell.per_repeat[r];
            sums[0] += row.rmse_norm_human;
            sums[1] += row.rmse_norm_autonomous;
            sums[2] += row.rmse_phys_human;
            sums[3] += row.rmse_phys_autonomous;
        }
        let n = cells.len() as f64;
        per_repeat.push(ClassComparisonRow {
            repeat: r,
            rmse_norm_human: sums[0] / n,
            rmse_norm_autonomous: sums[1] / n,
            rmse_phys_human: sums[2] / n,
            rmse_phys_autonomous: sums[3] / n,
        });
    }
    let col = |f: fn(&ClassComparisonRow) -> f64| -> MeanStd {
        MeanStd::of(&per_repeat.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ClassComparison {
        rmse_norm_human: col(|r| r.rmse_norm_human),
        rmse_norm_autonomous: col(|r| r.rmse_norm_autonomous),
        rmse_phys_human: col(|r| r.rmse_phys_human),
        rmse_phys_autonomous: col(|r| r.rmse_phys_autonomous),
        per_repeat,
    })
}

/// Trains one autoregressor per (H, F) cell per repeat on state-only
/// windows and reports pooled test RMSE. Cells with H + F exceeding
/// the window length are recorded as skipped, not errors.
pub fn run_autoregression(
    scenes: &[Scene],
    opts: &AutoregressOptions,
    master_seed: u64,
) -> Result<AutoregressionReport> {
    check_common(opts.repeats, opts.window, opts.stride)?;
    if opts.history_values.is_empty() || opts.future_values.is_empty() {
        return Err(Error::Config("history and future value lists must be non-empty".into()));
    }
    if opts.history_values.iter().chain(&opts.future_values).any(|&v| v == 0) {
        return Err(Error::Config("history and future lengths must be positive".into()));
    }

    let kind = VariantKind::S;
    let data: Vec<RepeatData> = (0..opts.repeats)
        .map(|r| repeat_windows(scenes, kind, opts.window, opts.stride, master_seed, r))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for &h in &opts.history_values {
        for &f in &opts.future_values {
            if h + f > opts.window {
                skipped.push(SkippedCell {
                    history: h,
                    future: f,
                    reason: format!("history {h} + future {f} exceeds window length {}", opts.window),
                });
                continue;
            }
            let hp = MlpHyperParams {
                history: h,
                horizon: f,
                hidden_dims: opts.settings.hidden_dims,
                batch_size: opts.settings.batch_size,
                learning_rate: opts.settings.learning_rate,
                max_epochs: opts.settings.max_epochs,
                patience: opts.settings.patience,
            };
            let mut per_repeat = Vec::with_capacity(opts.repeats);
            for (r, d) in data.iter().enumerate() {
                let model = fit_autoregressor(
                    &d.train,
                    &d.val,
                    &hp,
                    derive_seed(master_seed, &[hash_str("cell"), r as u64, h as u64, f as u64]),
                )?;
                per_repeat.push(eval_cell(&model, &d.test, h, f, r)?);
            }
            let pull = |f: fn(&AutoregressCellRepeat) -> f64| -> MeanStd {
                MeanStd::of(&per_repeat.iter().map(f).collect::<Vec<_>>())
            };
            let n_feat = per_repeat[0].rmse_phys_per_feature.len();
            let per_feature = (0..n_feat)
                .map(|c| {
                    MeanStd::of(
                        &per_repeat.iter().map(|p| p.rmse_phys_per_feature[c]).collect::<Vec<_>>(),
                    )
                })
                .collect();
            cells.push(AutoregressCell {
                history: h,
                future: f,
                rmse_norm: pull(|p| p.rmse_norm),
                rmse_phys: pull(|p| p.rmse_phys),
                rmse_phys_per_feature: per_feature,
                per_repeat,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Config(format!(
            "every (history, future) cell exceeds the window length {}",
            opts.window
        )));
    }
    let class_comparison = compare_classes(&cells, opts.repeats)?;
    Ok(AutoregressionReport {
        window: opts.window,
        stride: opts.stride,
        repeats: opts.repeats,
        master_seed,
        history_values: opts.history_values.clone(),
        future_values: opts.future_values.clone(),
        settings: opts.settings,
        feature_names: STATE_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        cells,
        skipped,
        class_comparison,
    })
}

// ---------------------------------------------------------------- //
// CSV companions                                                   //
// ---------------------------------------------------------------- //

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("csv not utf-8: {e}")))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn score_cells(s: &ClassificationScores) -> Vec<String> {
    s.as_array().iter().copied().map(fmt).collect()
}

const SCORE_HEADER: [&str; 6] = ["auroc", "aupr", "accuracy", "precision", "recall", "f1"];

/// One row per repeat plus mean/std rows.
pub fn classification_csv(report: &ClassificationReport) -> Result<String> {
    let mut rows = Vec::new();
    let mut header = vec!["repeat".to_string()];
    header.extend(SCORE_HEADER.iter().map(|s| s.to_string()));
    rows.push(header);
    for r in &report.per_repeat {
        let mut row = vec![r.repeat.to_string()];
        row.extend(score_cells(&r.scores));
        rows.push(row);
    }
    for (tag, s) in [("mean", &report.mean), ("std", &report.std)] {
        let mut row = vec![tag.to_string()];
        row.extend(score_cells(s));
        rows.push(row);
    }
    csv_string(rows)
}

/// One row per (rate, repeat) plus mean/std rows per rate.
pub fn degradation_csv(report: &DegradationReport) -> Result<String> {
    let mut rows = Vec::new();
    let mut header = vec!["rate".to_string(), "repeat".to_string()];
    header.extend(SCORE_HEADER.iter().map(|s| s.to_string()));
    rows.push(header);
    for dr in &report.rows {
        for (rep, s) in dr.per_repeat.iter().enumerate() {
            let mut row = vec![fmt(dr.rate), rep.to_string()];
            row.extend(score_cells(s));
            rows.push(row);
        }
        for (tag, s) in [("mean", &dr.mean), ("std", &dr.std)] {
            let mut row = vec![fmt(dr.rate), tag.to_string()];
            row.extend(score_cells(s));
            rows.push(row);
        }
    }
    csv_string(rows)
}

/// One row per (history, future, repeat) plus mean/std rows per cell.
pub fn autoregression_csv(report: &AutoregressionReport) -> Result<String> {
    let mut rows = Vec::new();
    let mut header = vec![
        "history".to_string(),
        "future".to_string(),
        "repeat".to_string(),
        "rmse_norm".to_string(),
        "rmse_phys".to_string(),
    ];
    header.extend(report.feature_names.iter().map(|n| format!("rmse_{n}")));
    rows.push(header);
    for cell in &report.cells {
        for p in &cell.per_repeat {
            let mut row = vec![
                cell.history.to_string(),
                cell.future.to_string(),
                p.repeat.to_string(),
                fmt(p.rmse_norm),
                fmt(p.rmse_phys),
            ];
            row.extend(p.rmse_phys_per_feature.iter().copied().map(fmt));
            rows.push(row);
        }
        let mut mean_row = vec![
            cell.history.to_string(),
            cell.future.to_string(),
            "mean".to_string(),
            fmt(cell.rmse_norm.mean),
            fmt(cell.rmse_phys.mean),
        ];
        mean_row.extend(cell.rmse_phys_per_feature.iter().map(|m| fmt(m.mean)));
        rows.push(mean_row);
        let mut std_row = vec![
            cell.history.to_string(),
            cell.future.to_string(),
            "std".to_string(),
            fmt(cell.rmse_norm.std),
            fmt(cell.rmse_phys.std),
        ];
        std_row.extend(cell.rmse_phys_per_feature.iter().map(|m| fmt(m.std)));
        rows.push(std_row);
    }
    csv_string(rows)
}

/// Two rows per (history, future): one per class, aggregated over
/// repeats.
pub fn class_comparison_csv(report: &AutoregressionReport) -> Result<String> {
    let mut rows = vec![vec![
        "history".to_string(),
        "future".to_string(),
        "class".to_string(),
        "rmse_norm_mean".to_string(),
        "rmse_norm_std".to_string(),
        "rmse_phys_mean".to_string(),
        "rmse_phys_std".to_string(),
    ]];
    for cell in &report.cells {
        let norm_h: Vec<f64> = cell.per_repeat.iter().map(|p| p.rmse_norm_human).collect();
        let norm_a: Vec<f64> = cell.per_repeat.iter().map(|p| p.rmse_norm_autonomous).collect();
        let phys_h: Vec<f64> = cell.per_repeat.iter().map(|p| p.rmse_phys_human).collect();
        let phys_a: Vec<f64> = cell.per_repeat.iter().map(|p| p.rmse_phys_autonomous).collect();
        for (label, norm, phys) in [
            (Label::Human, MeanStd::of(&norm_h), MeanStd::of(&phys_h)),
            (Label::Autonomous, MeanStd::of(&norm_a), MeanStd::of(&phys_a)),
        ] {
            rows.push(vec![
                cell.history.to_string(),
                cell.future.to_string(),
                class_name(label).to_string(),
                fmt(norm.mean),
                fmt(norm.std),
                fmt(phys.mean),
                fmt(phys.std),
            ]);
        }
    }
    csv_string(rows)
}

//! One handler per subcommand. Each resolves its options from flags,
//! config file, and defaults, runs the corresponding core routine, and
//! writes reports under the output directory. JSON reports carry the
//! resolved configuration; CSV files repeat the headline numbers for
//! spreadsheet work.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use drivescope_core::assign::{
    assemble_detection_series, read_candidates_jsonl, read_templates, select_target,
    DEFAULT_CLASS, DEFAULT_MIN_CONFIDENCE,
};
use drivescope_core::eval::experiments::{
    default_drop_rates, default_future_values, default_history_values, grid_family,
};
use drivescope_core::eval::grid::{RfGrid, SeqGrid, SeqTrainSettings};
use drivescope_core::eval::{
    autoregression_csv, class_comparison_csv, classification_csv, degradation_csv,
    run_autoregression, run_classification, run_degradation, AutoregressOptions, ClassifierGrid,
    ClassifyOptions, DegradeOptions, MlpTrainSettings,
};
use drivescope_core::ingest::{ingest_archive, write_scene, ColumnMap};
use drivescope_core::learners::ModelFamily;
use drivescope_core::{
    synth_dataset, Detection, Error, Label, Result, Scene, VariantKind, FULL_SCENE_LEN,
    TOOL_VERSION,
};

use crate::config::{
    ensure_dir, pick, pick_opt, write_json, write_text, FileConfig, ReportEnvelope,
};

fn label_name(label: Label) -> &'static str {
    match label {
        Label::Human => "human",
        Label::Autonomous => "autonomous",
    }
}

fn kind_slug(kind: VariantKind) -> &'static str {
    match kind {
        VariantKind::S => "s",
        VariantKind::D => "d",
        VariantKind::SPlusD => "sd",
    }
}

fn envelope<C: Serialize, R: Serialize>(
    command: &'static str,
    config: C,
    report: R,
) -> ReportEnvelope<C, R> {
    ReportEnvelope { tool_version: TOOL_VERSION, command, config, report }
}

/// Reads a canonical scene directory (one subdirectory per scene).
/// Skipped scenes are reported on stderr; an archive that yields no
/// usable scene at all is an error.
fn load_scenes(data: &Path) -> Result<Vec<Scene>> {
    let outcome = ingest_archive(data, &ColumnMap::identity())?;
    for s in &outcome.skipped {
        eprintln!("skipping scene {}: {}", s.id, s.reason);
    }
    for w in &outcome.warnings {
        eprintln!("note: {w}");
    }
    if outcome.scenes.is_empty() {
        return Err(Error::Data(format!("no usable scenes under {}", data.display())));
    }
    Ok(outcome.scenes)
}

/// Picks the classifier search space. A bare family name selects that
/// family's default grid; an explicit grid from the config file is
/// used as-is but must agree with the family when both are given.
fn resolve_grid(family: Option<String>, grid: Option<ClassifierGrid>) -> Result<ClassifierGrid> {
    let family = family.map(|f| ModelFamily::parse(&f)).transpose()?;
    if let Some(ModelFamily::Mlp) = family {
        return Err(Error::Config(
            "family mlp is the autoregressor; classification wants rf or seq".into(),
        ));
    }
    match (family, grid) {
        (_, None) => Ok(match family.unwrap_or(ModelFamily::Rf) {
            ModelFamily::Seq => ClassifierGrid::Seq {
                grid: SeqGrid::default(),
                train: SeqTrainSettings::default(),
            },
            _ => ClassifierGrid::Rf(RfGrid::default()),
        }),
        (None, Some(g)) => Ok(g),
        (Some(f), Some(g)) => {
            if grid_family(&g) != f {
                return Err(Error::Config(format!(
                    "family {f} conflicts with the {} grid in the config file",
                    grid_family(&g)
                )));
            }
            Ok(g)
        }
    }
}

// ---------------------------------------------------------------- synth

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scenes to generate per driver class
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Timestamps per scene
    #[arg(long)]
    pub timestamps: Option<usize>,
    /// Seconds between timestamps
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Serialize)]
struct SynthConfig {
    seed: u64,
    per_class: usize,
    timestamps: usize,
    dt: f64,
}

#[derive(Serialize)]
struct SceneSummary {
    id: String,
    label: &'static str,
    timestamps: usize,
}

#[derive(Serialize)]
struct SynthReport {
    scenes: Vec<SceneSummary>,
}

pub fn cmd_synth(args: &SynthArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let sec = file.synth.as_ref().cloned().unwrap_or_default();
    let config = SynthConfig {
        seed,
        per_class: pick(args.per_class, sec.per_class, 30),
        timestamps: pick(args.timestamps, sec.timestamps, FULL_SCENE_LEN),
        dt: pick(args.dt, sec.dt, 0.5),
    };
    if config.timestamps < FULL_SCENE_LEN {
        eprintln!(
            "note: scenes shorter than {FULL_SCENE_LEN} timestamps are skipped by the analysis commands"
        );
    }
    let scenes = synth_dataset(config.per_class, config.timestamps, config.dt, seed)?;
    ensure_dir(out)?;
    let mut summaries = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        write_scene(scene, out, true)?;
        summaries.push(SceneSummary {
            id: scene.id.clone(),
            label: label_name(scene.label),
            timestamps: scene.len(),
        });
    }
    let manifest = envelope("synth", config, SynthReport { scenes: summaries });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}

// --------------------------------------------------------------- ingest

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Archive root: one directory per scene with meta.json + series.csv
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Serialize)]
struct IngestConfig {
    seed: u64,
    input: PathBuf,
    column_map: std::collections::BTreeMap<String, String>,
}

#[derive(Serialize)]
struct SkipSummary {
    id: String,
    reason: String,
}

#[derive(Serialize)]
struct IngestReport {
    scenes: Vec<SceneSummary>,
    skipped: Vec<SkipSummary>,
    warnings: Vec<String>,
}

pub fn cmd_ingest(args: &IngestArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let sec = file.ingest.as_ref().cloned().unwrap_or_default();
    let input = pick_opt(args.input.clone(), sec.input)
        .ok_or_else(|| Error::Config("ingest needs --input or an ingest.input entry".into()))?;
    let column_map = sec.column_map.unwrap_or_default();
    let config = IngestConfig {
        seed,
        input: input.clone(),
        column_map: column_map.clone(),
    };

    let outcome = ingest_archive(&input, &ColumnMap(column_map))?;
    if outcome.scenes.is_empty() {
        return Err(Error::Data(format!("no usable scenes under {}", input.display())));
    }
    ensure_dir(out)?;
    let mut summaries = Vec::with_capacity(outcome.scenes.len());
    for scene in &outcome.scenes {
        write_scene(scene, out, true)?;
        summaries.push(SceneSummary {
            id: scene.id.clone(),
            label: label_name(scene.label),
            timestamps: scene.len(),
        });
    }
    let report = IngestReport {
        scenes: summaries,
        skipped: outcome
            .skipped
            .iter()
            .map(|s| SkipSummary { id: s.id.clone(), reason: s.reason.clone() })
            .collect(),
        warnings: outcome.warnings.clone(),
    };
    let kept = report.scenes.len();
    let skipped = report.skipped.len();
    let manifest = envelope("ingest", config, report);
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("ingested {kept} scenes ({skipped} skipped) into {}", out.display());
    Ok(())
}

// --------------------------------------------------------------- detect

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// JSONL file: one line per frame with its candidate detections
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// JSON file with target template embeddings
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Drop candidates below this detector confidence
    #[arg(long)]
    pub min_confidence: Option<f64>,
    /// Detector class to keep
    #[arg(long)]
    pub class: Option<String>,
}

#[derive(Serialize)]
struct DetectConfig {
    seed: u64,
    candidates: PathBuf,
    templates: PathBuf,
    min_confidence: f64,
    class: String,
}

#[derive(Serialize)]
struct DetectReport {
    frames: usize,
    /// Index of the chosen candidate per frame, null where nothing
    /// survived the filters.
    selected: Vec<Option<usize>>,
    /// Gap-filled box series, one entry per frame.
    series: Vec<Detection>,
}

pub fn cmd_detect(args: &DetectArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let sec = file.detect.as_ref().cloned().unwrap_or_default();
    let candidates_path = pick_opt(args.candidates.clone(), sec.candidates)
        .ok_or_else(|| Error::Config("detect needs --candidates or a detect.candidates entry".into()))?;
    let templates_path = pick_opt(args.templates.clone(), sec.templates)
        .ok_or_else(|| Error::Config("detect needs --templates or a detect.templates entry".into()))?;
    let config = DetectConfig {
        seed,
        candidates: candidates_path.clone(),
        templates: templates_path.clone(),
        min_confidence: pick(args.min_confidence, sec.min_confidence, DEFAULT_MIN_CONFIDENCE),
        class: pick(args.class.clone(), sec.class, DEFAULT_CLASS.to_string()),
    };
    if !(0.0..=1.0).contains(&config.min_confidence) {
        return Err(Error::Config(format!(
            "min_confidence must be in [0, 1], got {}",
            config.min_confidence
        )));
    }

    let frames = read_candidates_jsonl(&candidates_path)?;
    let templates = read_templates(&templates_path)?;
    let selected: Vec<Option<usize>> = frames
        .iter()
        .map(|c| select_target(c, &templates, config.min_confidence, &config.class))
        .collect::<Result<_>>()?;
    let series = assemble_detection_series(&frames, &templates, config.min_confidence, &config.class)?;

    ensure_dir(out)?;
    let report = DetectReport { frames: frames.len(), selected, series };
    let n = report.frames;
    write_json(&out.join("detections.json"), &envelope("detect", config, report))?;
    println!("selected target boxes for {n} frames");
    Ok(())
}

// -------------------------------------------------------------- classify

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Scene directory to analyze
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature layouts to run: S, D, or S+D (repeatable)
    #[arg(long = "kind")]
    pub kinds: Vec<String>,
    /// Window lengths to run (repeatable)
    #[arg(long = "window")]
    pub windows: Vec<usize>,
    /// Step between window starts
    #[arg(long)]
    pub stride: Option<usize>,
    /// Independent split repetitions
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Folds for hyperparameter cross validation
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Classifier family: rf or seq (grids beyond the default come from
    /// the config file)
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Serialize)]
struct ClassifyConfig {
    seed: u64,
    data: PathBuf,
    kinds: Vec<String>,
    windows: Vec<usize>,
    stride: usize,
    repeats: usize,
    cv_folds: usize,
    grid: ClassifierGrid,
}

pub fn cmd_classify(args: &ClassifyArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let sec = file.classify.as_ref().cloned().unwrap_or_default();
    let data = pick_opt(args.data.clone(), sec.data)
        .ok_or_else(|| Error::Config("classify needs --data or a classify.data entry".into()))?;
    let kind_names = pick(
        (!args.kinds.is_empty()).then(|| args.kinds.clone()),
        sec.kinds,
        vec!["S".into(), "D".into(), "S+D".into()],
    );
    let kinds: Vec<VariantKind> =
        kind_names.iter().map(|k| VariantKind::parse(k)).collect::<Result<_>>()?;
    let grid = resolve_grid(pick_opt(args.family.clone(), sec.family), sec.grid)?;
    let config = ClassifyConfig {
        seed,
        data: data.clone(),
        kinds: kinds.iter().map(|k| k.as_str().to_string()).collect(),
        windows: pick(
            (!args.windows.is_empty()).then(|| args.windows.clone()),
            sec.windows,
            vec![10, 20, 30, 40, 50],
        ),
        stride: pick(args.stride, sec.stride, 5),
        repeats: pick(args.repeats, sec.repeats, 5),
        cv_folds: pick(args.cv_folds, sec.cv_folds, 5),
        grid,
    };

    let scenes = load_scenes(&data)?;
    ensure_dir(out)?;
    let family = grid_family(&config.grid);
    for &kind in &kinds {
        for &window in &config.windows {
            let opts = ClassifyOptions {
                kind,
                window,
                stride: config.stride,
                repeats: config.repeats,
                cv_folds: config.cv_folds,
                grid: config.grid.clone(),
            };
            let report = run_classification(&scenes, &opts, seed)?;
            let stem = format!("classify_{family}_{}_w{window}", kind_slug(kind));
            write_text(&out.join(format!("{stem}.csv")), &classification_csv(&report)?)?;
            println!(
                "{} W={window}: auROC {:.4} +/- {:.4}, accuracy {:.4}",
                kind.as_str(),
                report.mean.auroc,
                report.std.auroc,
                report.mean.accuracy
            );
            write_json(&out.join(format!("{stem}.json")), &envelope("classify", &config, report))?;
        }
    }
    Ok(())
}

// --------------------------------------------------------------- degrade

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Scene directory to analyze
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Window length
    #[arg(long)]
    pub window: Option<usize>,
    /// Step between window starts
    #[arg(long)]
    pub stride: Option<usize>,
    /// Independent split repetitions
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Folds for hyperparameter cross validation
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Classifier family: rf or seq
    #[arg(long)]
    pub family: Option<String>,
    /// Fraction of window rows to mask (repeatable); the clean baseline
    /// is always included
    #[arg(long = "rate")]
    pub rates: Vec<f64>,
}

#[derive(Serialize)]
struct DegradeConfig {
    seed: u64,
    data: PathBuf,
    window: usize,
    stride: usize,
    repeats: usize,
    cv_folds: usize,
    rates: Vec<f64>,
    grid: ClassifierGrid,
}

pub fn cmd_degrade(args: &DegradeArgs, file: &FileConfig, seed: u64, out: &Path) -> Result<()> {
    let sec = file.degrade.as_ref().cloned().unwrap_or_default();
    let data = pick_opt(args.data.clone(), sec.data)
        .ok_or_else(|| Error::Config("degrade needs --data or a degrade.data entry".into()))?;
    let grid = resolve_grid(pick_opt(args.family.clone(), sec.family), sec.grid)?;
    let config = DegradeConfig {
        seed,
        data: data.clone(),
        window: pick(args.window, sec.window, 50),
        stride: pick(args.stride, sec.stride, 5),
        repeats: pick(args.repeats, sec.repeats, 5),
        cv_folds: pick(args.cv_folds, sec.cv_folds, 5),
        rates: pick((!args.rates.is_empty()).then(|| args.rates.clone()), sec.rates, default_drop_rates()),
        grid,
    };

    let scenes = load_scenes(&data)?;
    ensure_dir(out)?;
    let opts = DegradeOptions {
        window: config.window,
        stride: config.stride,
        repeats: config.repeats,
        cv_folds: config.cv_folds,
        grid: config.grid.clone(),
        rates: config.rates.clone(),
    };
    let report = run_degradation(&scenes, &opts, seed)?;
    let stem = format!("degrade_{}_w{}", report.family, config.window);
    write_text(&out.join(format!("{stem}.csv")), &degradation_csv(&report)?)?;
    for row in &report.rows {
        println!("rate {:.2}: auROC {:.4} +/- {:.4}", row.rate, row.mean.auroc, row.std.auroc);
    }
    write_json(&out.join(format!("{stem}.json")), &envelope("degrade", config, report))?;
    Ok(())
}

// ------------------------------------------------------------ autoregress

#[derive(Args, Debug)]
pub struct AutoregressArgs {
    /// Scene directory to analyze
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Window length each (history, future) pair must fit into
    #[arg(long)]
    pub window: Option<usize>,
    /// Step between window starts
    #[arg(long)]
    pub stride: Option<usize>,
    /// Independent split repetitions
    #[arg(long)]
    pub repeats: Option<usize>,
    /// History lengths to sweep (repeatable)
    #[arg(long = "history")]
    pub history: Vec<usize>,
    /// Future horizons to sweep (repeatable)
    #[arg(long = "future")]
    pub future: Vec<usize>,
}

#[derive(Serialize)]
struct AutoregressConfig {
    seed: u64,
    data: PathBuf,
    window: usize,
    stride: usize,
    repeats: usize,
    history: Vec<usize>,
    future: Vec<usize>,
    settings: MlpTrainSettings,
}

pub fn cmd_autoregress(
    args: &AutoregressArgs,
    file: &FileConfig,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let sec = file.autoregress.as_ref().cloned().unwrap_or_default();
    let data = pick_opt(args.data.clone(), sec.data)
        .ok_or_else(|| Error::Config("autoregress needs --data or an autoregress.data entry".into()))?;
    let defaults = MlpTrainSettings::default();
    let settings = MlpTrainSettings {
        hidden_dims: sec.hidden_dims.unwrap_or(defaults.hidden_dims),
        batch_size: sec.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: sec.learning_rate.unwrap_or(defaults.learning_rate),
        max_epochs: sec.max_epochs.unwrap_or(defaults.max_epochs),
        patience: sec.patience.unwrap_or(defaults.patience),
    };
    let config = AutoregressConfig {
        seed,
        data: data.clone(),
        window: pick(args.window, sec.window, 20),
        stride: pick(args.stride, sec.stride, 5),
        repeats: pick(args.repeats, sec.repeats, 5),
        history: pick(
            (!args.history.is_empty()).then(|| args.history.clone()),
            sec.history,
            default_history_values(),
        ),
        future: pick(
            (!args.future.is_empty()).then(|| args.future.clone()),
            sec.future,
            default_future_values(),
        ),
        settings,
    };

    let scenes = load_scenes(&data)?;
    ensure_dir(out)?;
    let opts = AutoregressOptions {
        window: config.window,
        stride: config.stride,
        repeats: config.repeats,
        history_values: config.history.clone(),
        future_values: config.future.clone(),
        settings: config.settings.clone(),
    };
    let report = run_autoregression(&scenes, &opts, seed)?;
    write_text(&out.join("autoregress.csv"), &autoregression_csv(&report)?)?;
    write_text(&out.join("class_comparison.csv"), &class_comparison_csv(&report)?)?;
    for cell in &report.cells {
        println!(
            "H={} F={}: rmse {:.4} +/- {:.4} (normalized)",
            cell.history, cell.future, cell.rmse_norm.mean, cell.rmse_norm.std
        );
    }
    for skip in &report.skipped {
        eprintln!("skipped H={} F={}: {}", skip.history, skip.future, skip.reason);
    }
    write_json(&out.join("autoregress.json"), &envelope("autoregress", config, report))?;
    Ok(())
}

//! Scene persistence and archive ingestion.
//!
//! On-disk layout: one directory per scene holding `meta.json` (id,
//! label, context tags, sample interval) and `series.csv` (one row per
//! timestamp). Detection cells are left blank where the detector had
//! no output. `parse_scene`/`write_scene` are strict and round-trip
//! bit-exactly; `ingest_archive` walks a corpus root leniently, mapping
//! foreign column names, truncating over-long series, and recording a
//! skip reason for every scene it cannot use instead of failing the
//! whole run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Detection, Label, Scene, StateVector, FULL_SCENE_LEN};

/// Canonical column order of `series.csv`.
pub const CSV_COLUMNS: [&str; 10] = [
    "t",
    "range_m",
    "speed_mps",
    "accel_mps2",
    "lane_offset_m",
    "yaw_rad",
    "det_cx",
    "det_cy",
    "det_h",
    "det_w",
];

pub const META_FILE: &str = "meta.json";
pub const SERIES_FILE: &str = "series.csv";

/// The two files that make up one stored scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneFileSet {
    pub meta_path: PathBuf,
    pub series_path: PathBuf,
}

impl SceneFileSet {
    pub fn in_dir(dir: &Path) -> Self {
        SceneFileSet { meta_path: dir.join(META_FILE), series_path: dir.join(SERIES_FILE) }
    }
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    id: String,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    city: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traffic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weather: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    dt: f64,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

const TAG_KEYS: [&str; 4] = ["city", "traffic", "weather", "source"];

impl MetaFile {
    fn from_scene(scene: &Scene) -> Self {
        let tag = |k: &str| scene.metadata.get(k).cloned();
        let extra = scene
            .metadata
            .iter()
            .filter(|(k, _)| !TAG_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        MetaFile {
            id: scene.id.clone(),
            label: scene.label.as_bit(),
            city: tag("city"),
            traffic: tag("traffic"),
            weather: tag("weather"),
            source: tag("source"),
            dt: scene.sample_interval_s,
            extra,
        }
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for (key, value) in
            TAG_KEYS.iter().zip([&self.city, &self.traffic, &self.weather, &self.source])
        {
            if let Some(v) = value {
                m.insert((*key).to_string(), v.clone());
            }
        }
        for (k, v) in &self.extra {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            m.insert(k.clone(), s);
        }
        m
    }
}

/// Resolved positions of the canonical columns inside a CSV header.
struct ColIdx {
    state: [usize; 5],
    det: Option<[usize; 4]>,
}

/// Maps canonical column names to the names used by a foreign archive.
/// Unmapped columns default to their canonical names.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    pub fn identity() -> Self {
        ColumnMap::default()
    }

    fn archive_name<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.0.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

fn resolve_columns(header: &csv::StringRecord, map: &ColumnMap, path: &Path) -> Result<ColIdx> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut state = [0usize; 5];
    for (i, canonical) in CSV_COLUMNS[1..6].iter().enumerate() {
        let archive = map.archive_name(canonical);
        state[i] = find(archive).ok_or_else(|| {
            Error::Config(format!(
                "mandatory column {canonical} (mapped to {archive:?}) missing from {}",
                path.display()
            ))
        })?;
    }
    let mut det = [0usize; 4];
    let mut det_found = 0;
    for (i, canonical) in CSV_COLUMNS[6..].iter().enumerate() {
        let archive = map.archive_name(canonical);
        match find(archive) {
            Some(pos) => {
                det[i] = pos;
                det_found += 1;
            }
            None if map.0.contains_key(*canonical) => {
                return Err(Error::Config(format!(
                    "mapped column {canonical} -> {archive:?} missing from {}",
                    path.display()
                )));
            }
            None => {}
        }
    }
    let det = match det_found {
        4 => Some(det),
        0 => None,
        _ => {
            return Err(Error::parse(
                path,
                None,
                "detection columns must be present as a full set of four or not at all",
            ))
        }
    };
    Ok(ColIdx { state, det })
}

fn parse_field(path: &Path, row: usize, name: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::parse(path, Some(row), format!("column {name}: cannot parse {raw:?} as a number"))
    })
}

/// Parses the data rows of an open CSV reader. Returns timestamps,
/// states, and detection slots; enforces the state-vector invariants.
fn parse_series(
    path: &Path,
    mut rdr: csv::Reader<fs::File>,
    idx: &ColIdx,
) -> Result<(Vec<f64>, Vec<StateVector>, Vec<Option<Detection>>)> {
    let mut ts = Vec::new();
    let mut states = Vec::new();
    let mut dets = Vec::new();
    for (row_i, record) in rdr.records().enumerate() {
        let row = row_i + 1;
        let record =
            record.map_err(|e| Error::parse(path, Some(row), format!("malformed row: {e}")))?;
        let cell = |pos: usize, name: &str| -> Result<&str> {
            record.get(pos).ok_or_else(|| {
                Error::parse(path, Some(row), format!("column {name} missing (short row)"))
            })
        };
        ts.push(parse_field(path, row, "t", cell(0, "t")?)?);
        let mut sv = [0.0; 5];
        for (i, name) in CSV_COLUMNS[1..6].iter().enumerate() {
            sv[i] = parse_field(path, row, name, cell(idx.state[i], name)?)?;
        }
        let state = StateVector::from_array(sv);
        state.validate().map_err(|e| Error::parse(path, Some(row), e.to_string()))?;
        states.push(state);

        let det = match idx.det {
            None => None,
            Some(positions) => {
                let cells: Vec<&str> = CSV_COLUMNS[6..]
                    .iter()
                    .zip(positions)
                    .map(|(name, pos)| cell(pos, name))
                    .collect::<Result<_>>()?;
                let empty = cells.iter().filter(|c| c.trim().is_empty()).count();
                match empty {
                    4 => None,
                    0 => {
                        let mut dv = [0.0; 4];
                        for (i, (name, raw)) in CSV_COLUMNS[6..].iter().zip(&cells).enumerate() {
                            dv[i] = parse_field(path, row, name, raw)?;
                        }
                        let det = Detection { cx: dv[0], cy: dv[1], h: dv[2], w: dv[3] };
                        det.validate().map_err(|e| Error::parse(path, Some(row), e.to_string()))?;
                        Some(det)
                    }
                    _ => {
                        return Err(Error::parse(
                            path,
                            Some(row),
                            "detection cells must be all blank or all filled",
                        ))
                    }
                }
            }
        };
        dets.push(det);
    }
    Ok((ts, states, dets))
}

fn read_meta(path: &Path) -> Result<MetaFile> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, None, e.to_string()))
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

/// Strict read of one stored scene. The CSV header must match the
/// canonical layout exactly, every value must parse and satisfy the
/// state-vector invariants, and a scene tagged with the reference
/// corpus source must have exactly 120 timestamps.
pub fn parse_scene(files: &SceneFileSet) -> Result<Scene> {
    let meta = read_meta(&files.meta_path)?;
    let label = Label::try_from(meta.label)
        .map_err(|e| Error::parse(&files.meta_path, None, e))?;
    if !(meta.dt.is_finite() && meta.dt > 0.0) {
        return Err(Error::parse(
            &files.meta_path,
            None,
            format!("dt must be positive, got {}", meta.dt),
        ));
    }

    let mut rdr = open_csv(&files.series_path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(&files.series_path, None, e.to_string()))?
        .clone();
    let expected: Vec<&str> = CSV_COLUMNS.to_vec();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::parse(
            &files.series_path,
            None,
            format!("header must be {expected:?}, got {got:?}"),
        ));
    }
    let idx = resolve_columns(&header, &ColumnMap::identity(), &files.series_path)?;
    let (_, states, dets) = parse_series(&files.series_path, open_csv(&files.series_path)?, &idx)?;
    if states.is_empty() {
        return Err(Error::parse(&files.series_path, None, "no data rows"));
    }

    let scene = Scene {
        id: meta.id.clone(),
        label,
        metadata: meta.metadata(),
        state_series: states,
        detection_series: dets,
        sample_interval_s: meta.dt,
    };
    if scene.source() == "nexus" && scene.len() != FULL_SCENE_LEN {
        return Err(Error::parse(
            &files.series_path,
            None,
            format!(
                "scene {} declares source nexus but has {} timestamps (expected {FULL_SCENE_LEN})",
                scene.id,
                scene.len()
            ),
        ));
    }
    scene.validate()?;
    Ok(scene)
}

fn fmt_f64(v: f64) -> String {
    // Display gives the shortest representation that parses back to
    // the same bits, which is what makes round trips exact.
    format!("{v}")
}

/// Writes one scene as `dir/<id>/meta.json` + `series.csv`.
///
/// Refuses to touch existing files unless `force` is set.
pub fn write_scene(scene: &Scene, dir: &Path, force: bool) -> Result<SceneFileSet> {
    scene.validate()?;
    let scene_dir = dir.join(&scene.id);
    let files = SceneFileSet::in_dir(&scene_dir);
    if !force && (files.meta_path.exists() || files.series_path.exists()) {
        return Err(Error::Config(format!(
            "refusing to overwrite {} (pass force to allow)",
            scene_dir.display()
        )));
    }
    fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;

    let meta = MetaFile::from_scene(scene);
    let mut meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::parse(&files.meta_path, None, e.to_string()))?;
    meta_json.push('\n');
    fs::write(&files.meta_path, meta_json).map_err(|e| Error::io(&files.meta_path, e))?;

    let mut out = String::new();
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for (t, (state, det)) in scene.state_series.iter().zip(&scene.detection_series).enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(10);
        cells.push(fmt_f64(t as f64 * scene.sample_interval_s));
        cells.extend(state.as_array().iter().map(|v| fmt_f64(*v)));
        match det {
            Some(d) => cells.extend(d.as_array().iter().map(|v| fmt_f64(*v))),
            None => cells.extend(std::iter::repeat(String::new()).take(4)),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(&files.series_path, out).map_err(|e| Error::io(&files.series_path, e))?;
    Ok(files)
}

/// Why a scene from an archive walk was left out.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SkipRecord {
    /// Scene id when known, otherwise the directory name.
    pub id: String,
    pub reason: String,
}

/// Result of walking an archive root.
#[derive(Clone, Debug, Default)]
pub struct IngestOutcome {
    /// Usable scenes, sorted by id.
    pub scenes: Vec<Scene>,
    pub skipped: Vec<SkipRecord>,
    /// Non-fatal notes (e.g. truncated series).
    pub warnings: Vec<String>,
}

fn estimate_dt(ts: &[f64]) -> Option<f64> {
    if ts.len() < 2 {
        return None;
    }
    let mut diffs: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = diffs[diffs.len() / 2];
    (mid.is_finite() && mid > 0.0).then_some(mid)
}

fn ingest_one(dir: &Path, map: &ColumnMap) -> Result<Scene> {
    let files = SceneFileSet::in_dir(dir);
    for p in [&files.meta_path, &files.series_path] {
        if !p.exists() {
            return Err(Error::Data(format!("missing {}", p.display())));
        }
    }
    let meta = read_meta(&files.meta_path)?;
    let label =
        Label::try_from(meta.label).map_err(|e| Error::parse(&files.meta_path, None, e))?;

    let mut rdr = open_csv(&files.series_path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(&files.series_path, None, e.to_string()))?
        .clone();
    let idx = resolve_columns(&header, map, &files.series_path)?;
    let (ts, states, dets) = parse_series(&files.series_path, open_csv(&files.series_path)?, &idx)?;

    if states.len() < FULL_SCENE_LEN {
        return Err(Error::Data(format!(
            "series has {} timestamps, need {FULL_SCENE_LEN}",
            states.len()
        )));
    }
    let dt = estimate_dt(&ts)
        .or_else(|| (meta.dt.is_finite() && meta.dt > 0.0).then_some(meta.dt))
        .ok_or_else(|| Error::Data("cannot determine sample interval".into()))?;

    let scene = Scene {
        id: meta.id.clone(),
        label,
        metadata: meta.metadata(),
        state_series: states[..FULL_SCENE_LEN].to_vec(),
        detection_series: dets[..FULL_SCENE_LEN].to_vec(),
        sample_interval_s: dt,
    };
    scene.validate()?;
    Ok(scene)
}

/// Walks `root` (one subdirectory per scene) and loads every usable
/// scene. Value-level problems in one scene skip that scene only;
/// a broken column mapping is a configuration error and aborts.
pub fn ingest_archive(root: &Path, map: &ColumnMap) -> Result<IngestOutcome> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut outcome = IngestOutcome::default();
    let mut seen = std::collections::BTreeSet::new();
    for dir in dirs {
        let dir_name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match ingest_one(&dir, map) {
            Ok(scene) => {
                if !seen.insert(scene.id.clone()) {
                    outcome
                        .skipped
                        .push(SkipRecord { id: dir_name, reason: format!("duplicate id {}", scene.id) });
                    continue;
                }
                if scene.len() != count_rows(&dir) {
                    outcome.warnings.push(format!(
                        "scene {}: series truncated to {FULL_SCENE_LEN} timestamps",
                        scene.id
                    ));
                }
                outcome.scenes.push(scene);
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => outcome.skipped.push(SkipRecord { id: dir_name, reason: e.to_string() }),
        }
    }
    outcome.scenes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(outcome)
}

fn count_rows(dir: &Path) -> usize {
    let files = SceneFileSet::in_dir(dir);
    open_csv(&files.series_path)
        .map(|mut r| r.records().filter_map(|r| r.ok()).count())
        .unwrap_or(0)
}

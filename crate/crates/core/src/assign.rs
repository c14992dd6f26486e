//! Target-vehicle selection among per-frame detector candidates.
//!
//! Each frame of a monitored scene may contain several detected
//! vehicles. The target is picked by appearance: candidates are first
//! filtered by class and confidence, then compared against a small set
//! of template embeddings captured for the matching capture condition;
//! the candidate with the smallest average Euclidean distance wins.
//! Frames where nothing survives the filter inherit the latest earlier
//! selection, so the assembled series always has one box per frame.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Detection;

/// Confidence floor used by the reference pipeline.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.9;
/// Detector class of interest.
pub const DEFAULT_CLASS: &str = "car";

/// One raw detector output with its appearance embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateDetection {
    pub bbox: Detection,
    pub class_label: String,
    pub confidence: f64,
    pub embedding: Vec<f64>,
}

/// Reference embeddings of the target under one capture condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub condition_tag: String,
    pub embeddings: Vec<Vec<f64>>,
}

impl TemplateSet {
    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() {
            return Err(Error::Data("template set has no embeddings".into()));
        }
        let dim = self.embeddings[0].len();
        if dim == 0 {
            return Err(Error::Data("template embeddings must be non-empty".into()));
        }
        for (i, e) in self.embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Shape(format!(
                    "template {i} has dimension {}, expected {dim}",
                    e.len()
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map(Vec::len).unwrap_or(0)
    }
}

/// Indices of candidates that match `class_name` with confidence at
/// least `min_conf` (inclusive), in their original order.
pub fn filter_candidates(
    candidates: &[CandidateDetection],
    min_conf: f64,
    class_name: &str,
) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.class_label == class_name && c.confidence >= min_conf)
        .map(|(i, _)| i)
        .collect()
}

/// Mean Euclidean distance from one embedding to every template.
pub fn avg_template_distance(embedding: &[f64], templates: &TemplateSet) -> Result<f64> {
    templates.validate()?;
    if embedding.len() != templates.dim() {
        return Err(Error::Shape(format!(
            "embedding dimension {} does not match templates ({})",
            embedding.len(),
            templates.dim()
        )));
    }
    let mut total = 0.0;
    for t in &templates.embeddings {
        let mut sq = 0.0;
        for (a, b) in embedding.iter().zip(t) {
            let d = a - b;
            sq += d * d;
        }
        total += sq.sqrt();
    }
    Ok(total / templates.embeddings.len() as f64)
}

/// Picks the target among one frame's candidates: filter by class and
/// confidence, then take the smallest average template distance. Ties
/// resolve to the lowest original index; an empty field gives None.
/// The returned index points into the *unfiltered* candidate list.
pub fn select_target(
    candidates: &[CandidateDetection],
    templates: &TemplateSet,
    min_conf: f64,
    class_name: &str,
) -> Result<Option<usize>> {
    let kept = filter_candidates(candidates, min_conf, class_name);
    let mut best: Option<(usize, f64)> = None;
    for i in kept {
        let d = avg_template_distance(&candidates[i].embedding, templates)?;
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Resolves a whole scene: one box per frame, selected per frame and
/// carried forward over frames with no usable candidate (a leading gap
/// borrows the first selection). Errors when no frame selects anything.
pub fn assemble_detection_series(
    frames: &[Vec<CandidateDetection>],
    templates: &TemplateSet,
    min_conf: f64,
    class_name: &str,
) -> Result<Vec<Detection>> {
    let mut picked: Vec<Option<Detection>> = Vec::with_capacity(frames.len());
    for frame in frames {
        let sel = select_target(frame, templates, min_conf, class_name)?;
        picked.push(sel.map(|i| frame[i].bbox));
    }
    crate::scene::fill_detection_gaps(&picked)
        .ok_or_else(|| Error::Data("no frame produced a usable target detection".into()))
}

#[derive(Serialize, Deserialize)]
struct CandidateJson {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class: String,
    conf: f64,
    emb: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    frame: usize,
    candidates: Vec<CandidateJson>,
}

/// Reads per-frame candidates from JSON lines: each line holds
/// `{"frame": i, "candidates": [{"box": [cx,cy,h,w], "class": ...,
/// "conf": ..., "emb": [...]}]}`. Frames may appear in any order but
/// must be unique and contiguous from zero.
pub fn read_candidates_jsonl(path: &Path) -> Result<Vec<Vec<CandidateDetection>>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames: Vec<(usize, Vec<CandidateDetection>)> = Vec::new();
    for (line_i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FrameJson = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, Some(line_i + 1), e.to_string()))?;
        let candidates = parsed
            .candidates
            .into_iter()
            .map(|c| CandidateDetection {
                bbox: Detection { cx: c.bbox[0], cy: c.bbox[1], h: c.bbox[2], w: c.bbox[3] },
                class_label: c.class,
                confidence: c.conf,
                embedding: c.emb,
            })
            .collect();
        frames.push((parsed.frame, candidates));
    }
    frames.sort_by_key(|(i, _)| *i);
    for (expect, (got, _)) in frames.iter().enumerate() {
        if *got != expect {
            return Err(Error::parse(
                path,
                None,
                format!("frame indices must be unique and contiguous from 0; problem at {got}"),
            ));
        }
    }
    Ok(frames.into_iter().map(|(_, c)| c).collect())
}

/// Reads a template file: `{"condition": tag, "embeddings": [[...]]}`.
pub fn read_templates(path: &Path) -> Result<TemplateSet> {
    #[derive(Deserialize)]
    struct TemplateJson {
        condition: String,
        embeddings: Vec<Vec<f64>>,
    }
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: TemplateJson =
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, None, e.to_string()))?;
    let set = TemplateSet { condition_tag: parsed.condition, embeddings: parsed.embeddings };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cand(class: &str, conf: f64, emb: Vec<f64>, cx: f64) -> CandidateDetection {
        CandidateDetection {
            bbox: Detection { cx, cy: 100.0, h: 40.0, w: 64.0 },
            class_label: class.into(),
            confidence: conf,
            embedding: emb,
        }
    }

    fn templates() -> TemplateSet {
        TemplateSet {
            condition_tag: "clear-day".into(),
            embeddings: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }

    #[test]
    fn filter_keeps_order_and_uses_inclusive_threshold() {
        let cands = vec![
            cand("car", 0.95, vec![0.0, 0.0], 1.0),
            cand("truck", 0.99, vec![0.0, 0.0], 2.0),
            cand("car", 0.9, vec![0.0, 0.0], 3.0),
            cand("car", 0.89, vec![0.0, 0.0], 4.0),
        ];
        assert_eq!(filter_candidates(&cands, 0.9, "car"), vec![0, 2]);
        assert!(filter_candidates(&[], 0.9, "car").is_empty());
    }

    #[test]
    fn avg_distance_matches_hand_computation() {
        // Distances from the origin to (1,0) and (0,1) are both 1.
        let d = avg_template_distance(&[0.0, 0.0], &templates()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // From (1,0): 0 and sqrt(2).
        let d = avg_template_distance(&[1.0, 0.0], &templates()).unwrap();
        assert!((d - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn avg_distance_rejects_dimension_mismatch() {
        assert!(matches!(
            avg_template_distance(&[0.0; 3], &templates()),
            Err(Error::Shape(_))
        ));
        let empty = TemplateSet { condition_tag: "x".into(), embeddings: vec![] };
        assert!(avg_template_distance(&[0.0, 0.0], &empty).is_err());
    }

    #[test]
    fn select_target_prefers_smallest_distance() {
        let cands = vec![
            cand("car", 0.95, vec![5.0, 5.0], 1.0),
            cand("car", 0.95, vec![1.0, 0.0], 2.0),
            cand("bike", 0.99, vec![0.5, 0.5], 3.0),
        ];
        let sel = select_target(&cands, &templates(), 0.9, "car").unwrap();
        assert_eq!(sel, Some(1));
    }

    #[test]
    fn select_target_breaks_ties_by_lowest_index() {
        let cands = vec![
            cand("car", 0.8, vec![1.0, 0.0], 0.0),
            cand("car", 0.95, vec![1.0, 0.0], 1.0),
            cand("car", 0.95, vec![0.0, 1.0], 2.0),
        ];
        // Candidates 1 and 2 tie exactly by symmetry; 0 is filtered out.
        let sel = select_target(&cands, &templates(), 0.9, "car").unwrap();
        assert_eq!(sel, Some(1));
    }

    #[test]
    fn select_target_empty_field_is_none() {
        let cands = vec![cand("truck", 0.99, vec![0.0, 0.0], 1.0)];
        assert_eq!(select_target(&cands, &templates(), 0.9, "car").unwrap(), None);
        assert_eq!(select_target(&[], &templates(), 0.9, "car").unwrap(), None);
    }

    #[test]
    fn assemble_carries_selection_over_gaps() {
        let frames = vec![
            vec![cand("truck", 0.99, vec![0.0, 0.0], 7.0)],
            vec![cand("car", 0.95, vec![1.0, 0.0], 10.0)],
            vec![],
            vec![cand("car", 0.92, vec![0.0, 1.0], 30.0)],
        ];
        let series = assemble_detection_series(&frames, &templates(), 0.9, "car").unwrap();
        let cxs: Vec<f64> = series.iter().map(|d| d.cx).collect();
        // Leading gap backfills from frame 1; frame 2 carries frame 1.
        assert_eq!(cxs, vec![10.0, 10.0, 10.0, 30.0]);
    }

    #[test]
    fn assemble_with_no_selection_anywhere_errors() {
        let frames = vec![vec![], vec![cand("car", 0.5, vec![0.0, 0.0], 1.0)]];
        assert!(matches!(
            assemble_detection_series(&frames, &templates(), 0.9, "car"),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn candidates_jsonl_round_trip_and_validation() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("cands.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        // Frames deliberately out of order.
        writeln!(
            f,
            r#"{{"frame": 1, "candidates": [{{"box": [5.0, 6.0, 7.0, 8.0], "class": "car", "conf": 0.97, "emb": [0.1, 0.2]}}]}}"#
        )
        .unwrap();
        writeln!(f, r#"{{"frame": 0, "candidates": []}}"#).unwrap();
        drop(f);

        let frames = read_candidates_jsonl(&path).unwrap();
        assert_eq!(frames.len(), 2);
        assert!(frames[0].is_empty());
        assert_eq!(frames[1][0].bbox.cx, 5.0);
        assert_eq!(frames[1][0].embedding, vec![0.1, 0.2]);

        // A gap in frame numbering is rejected.
        let bad = tmp.path().join("bad.jsonl");
        fs::write(&bad, r#"{"frame": 2, "candidates": []}"#).unwrap();
        assert!(read_candidates_jsonl(&bad).is_err());
    }

    #[test]
    fn template_file_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("templates.json");
        fs::write(&path, r#"{"condition": "rain-dusk", "embeddings": [[1.0, 2.0], [3.0, 4.0]]}"#)
            .unwrap();
        let set = read_templates(&path).unwrap();
        assert_eq!(set.condition_tag, "rain-dusk");
        assert_eq!(set.dim(), 2);

        fs::write(&path, r#"{"condition": "x", "embeddings": [[1.0], [2.0, 3.0]]}"#).unwrap();
        assert!(read_templates(&path).is_err());
    }
}

//! Assignment of detections to ground truths, producing TP/FP/FN counts and
//! the localisation qualities of the TPs.
//!
//! Matching runs per class and per image. A detection qualifies as a TP only
//! when its localisation quality strictly exceeds the validation threshold
//! `tau`. Soft predictions are matched in descending score order; hard
//! predictions greedily by quality.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, LocQuality};

/// One ground-truth or detected object.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub image_id: i64,
    pub class_id: i64,
    pub geometry: Geometry,
    /// Present exactly when the instance is a soft prediction.
    pub score: Option<f64>,
    /// Surface area for partition filters.
    pub area: f64,
    /// Position in the original input, used for deterministic tie-breaking.
    pub input_index: usize,
}

impl Instance {
    /// A ground truth or hard prediction (no confidence score).
    pub fn hard(image_id: i64, class_id: i64, geometry: Geometry, input_index: usize) -> Self {
        let area = geometry.area();
        Instance { image_id, class_id, geometry, score: None, area, input_index }
    }

    /// A soft prediction carrying a confidence score in `[0, 1]`.
    pub fn soft(
        image_id: i64,
        class_id: i64,
        geometry: Geometry,
        score: f64,
        input_index: usize,
    ) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::Contract(format!("score {score} outside [0, 1]")));
        }
        let area = geometry.area();
        Ok(Instance { image_id, class_id, geometry, score: Some(score), area, input_index })
    }

    pub fn with_area(mut self, area: f64) -> Self {
        self.area = area;
        self
    }
}

/// The outcome of TP/FP/FN assignment for one class (possibly pooled over
/// several images).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    /// Localisation quality of each TP, every value strictly above `tau`.
    pub tp_lqs: Vec<f64>,
    /// `(gt input_index, detection input_index)` of each TP pair.
    pub tp_pairs: Vec<(usize, usize)>,
    /// The TP validation threshold the assignment was made with.
    pub tau: f64,
}

impl MatchResult {
    pub fn empty(tau: f64) -> Self {
        MatchResult { n_tp: 0, n_fp: 0, n_fn: 0, tp_lqs: Vec::new(), tp_pairs: Vec::new(), tau }
    }

    /// Assemble a result from raw counts, validating the TP-quality contract.
    pub fn from_counts(tp_lqs: Vec<f64>, n_fp: usize, n_fn: usize, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        for &lq in &tp_lqs {
            if !(lq > tau) || lq > 1.0 {
                return Err(Error::Contract(format!(
                    "TP localisation quality {lq} not in ({tau}, 1]"
                )));
            }
        }
        let n_tp = tp_lqs.len();
        Ok(MatchResult { n_tp, n_fp, n_fn, tp_lqs, tp_pairs: Vec::new(), tau })
    }

    pub fn num_detections(&self) -> usize {
        self.n_tp + self.n_fp
    }

    pub fn num_ground_truths(&self) -> usize {
        self.n_tp + self.n_fn
    }

    /// Pool another per-image result into this one.
    pub fn merge(&mut self, other: &MatchResult) -> Result<()> {
        if self.tau != other.tau {
            return Err(Error::Contract(format!(
                "cannot merge matches made at tau {} and {}",
                self.tau, other.tau
            )));
        }
        self.n_tp += other.n_tp;
        self.n_fp += other.n_fp;
        self.n_fn += other.n_fn;
        self.tp_lqs.extend_from_slice(&other.tp_lqs);
        self.tp_pairs.extend_from_slice(&other.tp_pairs);
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || !(0.0..1.0).contains(&tau) {
        return Err(Error::Config(format!("tau {tau} outside [0, 1)")));
    }
    Ok(())
}

/// Detection-set filtering applied before matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    /// Detections with a lower score are discarded (boundary kept).
    pub score_threshold: f64,
    /// Keep only the top-k detections per image by score.
    pub max_dets_per_image: Option<usize>,
    /// Keep only the top-k detections per class across the dataset.
    pub max_dets_per_class: Option<usize>,
    /// Keep instances with area in `[min, max)`.
    pub area_range: Option<(f64, f64)>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            score_threshold: 0.0,
            max_dets_per_image: None,
            max_dets_per_class: None,
            area_range: None,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.score_threshold.is_finite() || !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!(
                "score threshold {} outside [0, 1]",
                self.score_threshold
            )));
        }
        if self.max_dets_per_image == Some(0) || self.max_dets_per_class == Some(0) {
            return Err(Error::Config("detection caps must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.area_range {
            if !(lo < hi) {
                return Err(Error::Config(format!("area range [{lo}, {hi}) is empty")));
            }
        }
        Ok(())
    }

    pub fn is_noop(&self) -> bool {
        self == &FilterSpec::default()
    }

    fn needs_scores(&self) -> bool {
        self.score_threshold > 0.0
            || self.max_dets_per_image.is_some()
            || self.max_dets_per_class.is_some()
    }
}

/// Apply a [`FilterSpec`] to a detection list, preserving input order among
/// survivors.
pub fn filter_detections(detections: &[Instance], spec: &FilterSpec) -> Result<Vec<Instance>> {
    spec.validate()?;
    if spec.needs_scores() && detections.iter().any(|d| d.score.is_none()) {
        return Err(Error::Config(
            "score-dependent filtering requires soft predictions".into(),
        ));
    }

    let mut keep: Vec<bool> = detections
        .iter()
        .map(|d| d.score.map_or(true, |s| s >= spec.score_threshold))
        .collect();

    if let Some(cap) = spec.max_dets_per_image {
        retain_top_k(detections, &mut keep, cap, |d| d.image_id);
    }
    if let Some(cap) = spec.max_dets_per_class {
        retain_top_k(detections, &mut keep, cap, |d| d.class_id);
    }
    if let Some((lo, hi)) = spec.area_range {
        for (i, d) in detections.iter().enumerate() {
            if !(d.area >= lo && d.area < hi) {
                keep[i] = false;
            }
        }
    }

    Ok(detections
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(d, _)| d.clone())
        .collect())
}

/// Area-range side of a [`FilterSpec`], applied to ground truths.
pub fn filter_ground_truths(ground_truths: &[Instance], spec: &FilterSpec) -> Vec<Instance> {
    match spec.area_range {
        None => ground_truths.to_vec(),
        Some((lo, hi)) => ground_truths
            .iter()
            .filter(|g| g.area >= lo && g.area < hi)
            .cloned()
            .collect(),
    }
}

fn retain_top_k(dets: &[Instance], keep: &mut [bool], cap: usize, group: impl Fn(&Instance) -> i64) {
    let mut by_group: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        if keep[i] {
            by_group.entry(group(d)).or_default().push(i);
        }
    }
    for indices in by_group.values_mut() {
        if indices.len() <= cap {
            continue;
        }
        indices.sort_by(|&a, &b| {
            score_desc(dets[a].score.unwrap(), dets[b].score.unwrap())
                .then(dets[a].input_index.cmp(&dets[b].input_index))
        });
        for &i in &indices[cap..] {
            keep[i] = false;
        }
    }
}

fn score_desc(a: f64, b: f64) -> std::cmp::Ordering {
    b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
}

/// Match soft predictions against ground truths for one class and image.
///
/// Detections are visited in descending score order (ties by input index);
/// each takes the unmatched ground truth with the highest quality among
/// those with `lq > tau`. Quality ties go to the ground truth with the
/// lowest input index.
pub fn match_soft<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: F,
    tau: f64,
) -> Result<MatchResult>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    check_tau(tau)?;
    let mut order: Vec<usize> = (0..detections.len()).collect();
    for d in detections {
        if d.score.is_none() {
            return Err(Error::Contract(
                "soft matching requires every detection to carry a score".into(),
            ));
        }
    }
    order.sort_by(|&a, &b| {
        score_desc(detections[a].score.unwrap(), detections[b].score.unwrap())
            .then(detections[a].input_index.cmp(&detections[b].input_index))
    });

    let mut gt_used = vec![false; ground_truths.len()];
    let mut result = MatchResult::empty(tau);
    for &di in &order {
        let det = &detections[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truths.iter().enumerate() {
            if gt_used[gi] {
                continue;
            }
            let lq = lq_fn(gt, det)?.value();
            if lq > tau && best.map_or(true, |(_, b)| lq > b) {
                best = Some((gi, lq));
            }
        }
        match best {
            Some((gi, lq)) => {
                gt_used[gi] = true;
                result.n_tp += 1;
                result.tp_lqs.push(lq);
                result.tp_pairs.push((ground_truths[gi].input_index, det.input_index));
            }
            None => result.n_fp += 1,
        }
    }
    result.n_fn = gt_used.iter().filter(|u| !**u).count();
    Ok(result)
}

/// Match hard predictions: candidate pairs with `lq > tau` sorted by quality
/// descending (ties by ground-truth then detection input index), greedily
/// accepting pairs whose endpoints are both unused.
pub fn match_hard<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: F,
    tau: f64,
) -> Result<MatchResult>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    check_tau(tau)?;
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (gi, gt) in ground_truths.iter().enumerate() {
        for (di, det) in detections.iter().enumerate() {
            let lq = lq_fn(gt, det)?.value();
            if lq > tau {
                candidates.push((gi, di, lq));
            }
        }
    }
    candidates.sort_by(|a, b| {
        score_desc(a.2, b.2)
            .then(ground_truths[a.0].input_index.cmp(&ground_truths[b.0].input_index))
            .then(detections[a.1].input_index.cmp(&detections[b.1].input_index))
    });

    let mut gt_used = vec![false; ground_truths.len()];
    let mut det_used = vec![false; detections.len()];
    let mut result = MatchResult::empty(tau);
    for (gi, di, lq) in candidates {
        if gt_used[gi] || det_used[di] {
            continue;
        }
        gt_used[gi] = true;
        det_used[di] = true;
        result.n_tp += 1;
        result.tp_lqs.push(lq);
        result.tp_pairs.push((ground_truths[gi].input_index, detections[di].input_index));
    }
    result.n_fp = det_used.iter().filter(|u| !**u).count();
    result.n_fn = gt_used.iter().filter(|u| !**u).count();
    Ok(result)
}

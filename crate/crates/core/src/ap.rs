//! PR-curve construction and the AP/AR family: interpolation, exact AUC,
//! 101-point AUC, the threshold-averaged variant, and averaged recall.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::geometry::LocQuality;
use crate::matching::{match_soft, FilterSpec, Instance, MatchResult};

/// The ten TP-validation thresholds of the threshold-averaged AP variant.
pub const COCO_TAUS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// A precision-recall curve in score-descending accumulation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub interpolated: bool,
}

impl PrCurve {
    /// Replace each precision with the maximum precision at any equal or
    /// later point of the accumulation sequence (the ceiling envelope).
    pub fn interpolate(&self) -> PrCurve {
        let mut points = self.points.clone();
        for i in (0..points.len().saturating_sub(1)).rev() {
            points[i].precision = points[i].precision.max(points[i + 1].precision);
        }
        PrCurve { points, interpolated: true }
    }
}

/// Per-detection flag after matching: the TP quality, or `None` for a FP.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DetFlag {
    pub score: f64,
    pub lq: Option<f64>,
}

/// Match one class dataset-wide and return per-detection flags sorted by
/// score descending (input-index tie-break). Matching runs independently
/// per image; lower-scored detections never influence higher-scored ones,
/// so the flags are valid for every score-threshold suffix at once.
pub(crate) fn flag_detections<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    tau: f64,
) -> Result<Vec<DetFlag>>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    let mut gts_by_image: BTreeMap<i64, Vec<&Instance>> = BTreeMap::new();
    for g in ground_truths {
        gts_by_image.entry(g.image_id).or_default().push(g);
    }
    let mut dets_by_image: BTreeMap<i64, Vec<&Instance>> = BTreeMap::new();
    for d in detections {
        dets_by_image.entry(d.image_id).or_default().push(d);
    }

    let mut tp_lq_by_det: HashMap<usize, f64> = HashMap::new();
    for (image_id, dets) in &dets_by_image {
        let gts: Vec<Instance> = gts_by_image
            .get(image_id)
            .map(|v| v.iter().map(|g| (*g).clone()).collect())
            .unwrap_or_default();
        let dets_owned: Vec<Instance> = dets.iter().map(|d| (*d).clone()).collect();
        let m = match_soft(&gts, &dets_owned, lq_fn, tau)?;
        for (i, &(_, det_idx)) in m.tp_pairs.iter().enumerate() {
            tp_lq_by_det.insert(det_idx, m.tp_lqs[i]);
        }
    }

    let mut order: Vec<&Instance> = detections.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .unwrap()
            .partial_cmp(&a.score.unwrap())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.input_index.cmp(&b.input_index))
    });
    Ok(order
        .into_iter()
        .map(|d| DetFlag {
            score: d.score.unwrap(),
            lq: tp_lq_by_det.get(&d.input_index).copied(),
        })
        .collect())
}

/// Build the raw PR curve of one class over the whole dataset.
pub fn pr_curve<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    tau: f64,
) -> Result<PrCurve>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    if ground_truths.is_empty() {
        return Err(Error::Undefined("PR curve of a class without ground truths".into()));
    }
    if detections.iter().any(|d| d.score.is_none()) {
        return Err(Error::Contract("PR curve requires soft predictions".into()));
    }
    let flags = flag_detections(ground_truths, detections, lq_fn, tau)?;
    let n_gt = ground_truths.len() as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let points = flags
        .iter()
        .map(|f| {
            if f.lq.is_some() {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                recall: tp as f64 / n_gt,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect();
    Ok(PrCurve { points, interpolated: false })
}

/// Area under the step curve: the sum of `(r_i - r_{i-1}) * p_i` over the
/// accumulation sequence, with precision 0 beyond the last recall. On an
/// interpolated curve this is the exact area under the ceiling envelope.
pub fn ap_exact(curve: &PrCurve) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in &curve.points {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    area
}

/// Mean precision sampled at the 101 evenly spaced recalls `0.00..=1.00`;
/// the precision at a recall is that of the first curve point with equal or
/// greater recall, 0 beyond the last point.
pub fn ap_101(curve: &PrCurve) -> f64 {
    let mut total = 0.0;
    let mut idx = 0usize;
    for k in 0..=100u32 {
        let threshold = f64::from(k) / 100.0;
        while idx < curve.points.len() && curve.points[idx].recall < threshold {
            idx += 1;
        }
        if idx < curve.points.len() {
            total += curve.points[idx].precision;
        }
    }
    total / 101.0
}

/// Exact and 101-point AP of one class at a single threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap_exact: f64,
    pub ap_101: f64,
    pub tau: f64,
}

pub fn ap_at_tau<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    tau: f64,
) -> Result<ApResult>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    let envelope = pr_curve(ground_truths, detections, lq_fn, tau)?.interpolate();
    Ok(ApResult { ap_exact: ap_exact(&envelope), ap_101: ap_101(&envelope), tau })
}

/// 101-point AP averaged over the ten thresholds of [`COCO_TAUS`].
pub fn ap_coco<F>(ground_truths: &[Instance], detections: &[Instance], lq_fn: &F) -> Result<f64>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    let mut total = 0.0;
    for tau in COCO_TAUS {
        total += ap_at_tau(ground_truths, detections, lq_fn, tau)?.ap_101;
    }
    Ok(total / COCO_TAUS.len() as f64)
}

/// Recall with the top `r` detections per image, averaged over the ten
/// thresholds of [`COCO_TAUS`].
pub fn average_recall<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    r: usize,
) -> Result<f64>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    if r < 1 {
        return Err(Error::Config("average recall needs a positive detection cap".into()));
    }
    if ground_truths.is_empty() {
        return Err(Error::Undefined("recall of a class without ground truths".into()));
    }
    let spec = FilterSpec { max_dets_per_image: Some(r), ..FilterSpec::default() };
    let capped = crate::matching::filter_detections(detections, &spec)?;
    let n_gt = ground_truths.len() as f64;
    let mut total = 0.0;
    for tau in COCO_TAUS {
        let flags = flag_detections(ground_truths, &capped, lq_fn, tau)?;
        let n_tp = flags.iter().filter(|f| f.lq.is_some()).count();
        total += n_tp as f64 / n_gt;
    }
    Ok(total / COCO_TAUS.len() as f64)
}

/// The single-point convention for hard predictions: precision times recall.
pub fn ap_hard_single_point(m: &MatchResult) -> Option<f64> {
    let n_det = m.num_detections();
    let n_gt = m.num_ground_truths();
    if n_det == 0 || n_gt == 0 {
        return None;
    }
    let precision = m.n_tp as f64 / n_det as f64;
    let recall = m.n_tp as f64 / n_gt as f64;
    Some(precision * recall)
}

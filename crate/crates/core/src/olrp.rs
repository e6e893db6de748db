//! Score-threshold analysis: s-LRP curves, Optimal LRP, the LRP-Optimal
//! threshold, the averaged variant, and sweeps over the TP validation
//! threshold.
//!
//! The LRP value of a thresholded detection set is piecewise constant in the
//! threshold and changes only at detection scores, so one knot per distinct
//! score captures the whole curve exactly. Knots are computed in a single
//! descending-score pass with running TP/FP/localisation-error accumulators.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::ap::flag_detections;
use crate::error::{Error, Result};
use crate::geometry::LocQuality;
use crate::lrp::{from_accumulators, LrpResult};
use crate::matching::Instance;

/// One knot of an s-LRP curve: the LRP of the detections with score >= `score`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SLrpKnot {
    pub score: f64,
    #[serde(flatten)]
    pub result: LrpResult,
}

/// The s-LRP curve of one class: one knot per distinct detection score,
/// scores strictly decreasing, right-constant between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLrpCurve {
    pub knots: Vec<SLrpKnot>,
    pub gt_count: usize,
    pub tau: f64,
}

/// Compute the s-LRP curve of one class over the whole dataset.
pub fn s_lrp_curve<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    tau: f64,
) -> Result<SLrpCurve>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    if detections.iter().any(|d| d.score.is_none()) {
        return Err(Error::Contract("s-LRP curves require soft predictions".into()));
    }
    let flags = flag_detections(ground_truths, detections, lq_fn, tau)?;
    let n_gt = ground_truths.len();

    let mut knots = Vec::new();
    let mut n_tp = 0usize;
    let mut n_fp = 0usize;
    let mut loc_err_sum = 0.0f64;
    let mut i = 0usize;
    while i < flags.len() {
        let score = flags[i].score;
        // absorb the whole group of equal scores before emitting a knot
        while i < flags.len() && flags[i].score == score {
            match flags[i].lq {
                Some(lq) => {
                    n_tp += 1;
                    loc_err_sum += 1.0 - lq;
                }
                None => n_fp += 1,
            }
            i += 1;
        }
        let result = from_accumulators(n_tp, loc_err_sum, n_fp, n_gt - n_tp, tau);
        knots.push(SLrpKnot { score, result });
    }
    Ok(SLrpCurve { knots, gt_count: n_gt, tau })
}

/// Optimal LRP: the minimum of the curve, with the components and the
/// score threshold `s_star` at which it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlrpResult {
    pub olrp: f64,
    #[serde(rename = "loc")]
    pub loc_err: Option<f64>,
    #[serde(rename = "fp")]
    pub fp_err: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_err: Option<f64>,
    /// Absent for the all-false-negative convention (no detections at all).
    pub s_star: Option<f64>,
}

/// Minimum LRP over the knots; value ties resolve to the largest score.
///
/// An empty curve evaluates to error 1 when ground truths exist (everything
/// is a false negative) and to `None` when there is nothing to evaluate.
pub fn olrp(curve: &SLrpCurve) -> Option<OlrpResult> {
    let mut best: Option<&SLrpKnot> = None;
    for knot in &curve.knots {
        let value = match knot.result.lrp {
            Some(v) => v,
            None => continue,
        };
        // strict improvement only: the earlier (higher-score) knot keeps ties
        if best.map_or(true, |b| value < b.result.lrp.unwrap()) {
            best = Some(knot);
        }
    }
    match best {
        Some(knot) => Some(OlrpResult {
            olrp: knot.result.lrp.unwrap(),
            loc_err: knot.result.loc_err,
            fp_err: knot.result.fp_err,
            fn_err: knot.result.fn_err,
            s_star: Some(knot.score),
        }),
        None if curve.gt_count > 0 => Some(OlrpResult {
            olrp: 1.0,
            loc_err: None,
            fp_err: None,
            fn_err: Some(1.0),
            s_star: None,
        }),
        None => None,
    }
}

/// Unweighted mean of the knot values over the distinct-score set.
pub fn alrp(curve: &SLrpCurve) -> Option<f64> {
    crate::lrp::mean_defined(curve.knots.iter().map(|k| k.result.lrp))
}

/// Optimal LRP recomputed at each TP validation threshold of the grid.
pub fn tau_sweep<F>(
    ground_truths: &[Instance],
    detections: &[Instance],
    lq_fn: &F,
    taus: &[f64],
) -> Result<Vec<(f64, Option<OlrpResult>)>>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    taus.iter()
        .map(|&tau| {
            let curve = s_lrp_curve(ground_truths, detections, lq_fn, tau)?;
            Ok((tau, olrp(&curve)))
        })
        .collect()
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write curve knots as CSV rows `class_id,score,lrp,loc,fp,fn`.
pub fn write_slrp_csv<W: Write>(out: &mut W, class_id: i64, curve: &SLrpCurve) -> std::io::Result<()> {
    for knot in &curve.knots {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            class_id,
            knot.score,
            field(knot.result.lrp),
            field(knot.result.loc_err),
            field(knot.result.fp_err),
            field(knot.result.fn_err),
        )?;
    }
    Ok(())
}

/// Header matching [`write_slrp_csv`].
pub const SLRP_CSV_HEADER: &str = "class_id,score,lrp,loc,fp,fn";

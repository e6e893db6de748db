//! LRP Error: the average matching error of a detection set, its three
//! components, the importance-weighted form, and class-level aggregation.
//!
//! For a match with `n_tp` true positives of qualities `lq_i`, `n_fp` false
//! positives and `n_fn` false negatives at validation threshold `tau`:
//!
//! ```text
//! LRP = ( sum_i (1 - lq_i) / (1 - tau) + n_fp + n_fn ) / (n_tp + n_fp + n_fn)
//! ```
//!
//! Equivalently a weighted combination of the components: the mean TP
//! localisation error, 1 - precision and 1 - recall, with weights
//! `n_tp / (1 - tau)`, `|D|` and `|G|`.
//!
//! A value whose denominator is zero is undefined and carried as `None`,
//! never as a sentinel number; aggregation skips undefined fields
//! independently per field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchResult;

/// LRP Error with its components and the recombination weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpResult {
    /// The error value; `None` when there is nothing to evaluate.
    pub lrp: Option<f64>,
    /// Mean `1 - lq` over TPs; `None` when there are no TPs.
    #[serde(rename = "loc")]
    pub loc_err: Option<f64>,
    /// `1 - precision`; `None` when there are no detections.
    #[serde(rename = "fp")]
    pub fp_err: Option<f64>,
    /// `1 - recall`; `None` when there are no ground truths.
    #[serde(rename = "fn")]
    pub fn_err: Option<f64>,
    pub w_loc: f64,
    pub w_fp: f64,
    pub w_fn: f64,
    /// Normalisation constant `n_tp + n_fp + n_fn`.
    pub z: f64,
}

/// LRP Error of a match result, using the threshold the match was made with.
pub fn lrp(m: &MatchResult) -> Result<LrpResult> {
    for &lq in &m.tp_lqs {
        if !(lq > m.tau) {
            return Err(Error::Contract(format!(
                "TP quality {lq} does not exceed tau {}",
                m.tau
            )));
        }
    }
    let loc_sum: f64 = m.tp_lqs.iter().map(|&q| 1.0 - q).sum();
    Ok(from_accumulators(m.n_tp, loc_sum, m.n_fp, m.n_fn, m.tau))
}

/// Assemble an [`LrpResult`] from pooled accumulators: TP count, the sum of
/// `1 - lq` over TPs, and the FP/FN counts.
pub(crate) fn from_accumulators(
    n_tp: usize,
    loc_err_sum: f64,
    n_fp: usize,
    n_fn: usize,
    tau: f64,
) -> LrpResult {
    let (n_tp_f, n_fp_f, n_fn_f) = (n_tp as f64, n_fp as f64, n_fn as f64);
    let n_det = n_tp_f + n_fp_f;
    let n_gt = n_tp_f + n_fn_f;
    let z = n_tp_f + n_fp_f + n_fn_f;

    let value = if z > 0.0 {
        Some((loc_err_sum / (1.0 - tau) + n_fp_f + n_fn_f) / z)
    } else {
        None
    };
    LrpResult {
        lrp: value,
        loc_err: (n_tp > 0).then(|| loc_err_sum / n_tp_f),
        fp_err: (n_det > 0.0).then(|| n_fp_f / n_det),
        fn_err: (n_gt > 0.0).then(|| n_fn_f / n_gt),
        w_loc: n_tp_f / (1.0 - tau),
        w_fp: n_det,
        w_fn: n_gt,
        z,
    }
}

/// Importance weights for the generalized LRP form. `(1, 1, 1)` reproduces
/// the plain definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub alpha_tp: f64,
    pub alpha_fp: f64,
    pub alpha_fn: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        ImportanceWeights { alpha_tp: 1.0, alpha_fp: 1.0, alpha_fn: 1.0 }
    }
}

impl ImportanceWeights {
    pub fn new(alpha_tp: f64, alpha_fp: f64, alpha_fn: f64) -> Result<Self> {
        for (name, v) in [("tp", alpha_tp), ("fp", alpha_fp), ("fn", alpha_fn)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("importance weight {name} = {v} must be > 0")));
            }
        }
        Ok(ImportanceWeights { alpha_tp, alpha_fp, alpha_fn })
    }

    pub fn is_uniform(&self) -> bool {
        self.alpha_tp == self.alpha_fp && self.alpha_fp == self.alpha_fn
    }
}

/// Weighted LRP: each error source duplicated by its importance weight in
/// both the total matching error and the normalisation constant.
pub fn lrp_weighted(m: &MatchResult, alpha: &ImportanceWeights) -> Result<Option<f64>> {
    for &lq in &m.tp_lqs {
        if !(lq > m.tau) {
            return Err(Error::Contract(format!(
                "TP quality {lq} does not exceed tau {}",
                m.tau
            )));
        }
    }
    let z = alpha.alpha_tp * m.n_tp as f64
        + alpha.alpha_fp * m.n_fp as f64
        + alpha.alpha_fn * m.n_fn as f64;
    if z == 0.0 {
        return Ok(None);
    }
    let loc_sum: f64 = m.tp_lqs.iter().map(|&q| (1.0 - q) / (1.0 - m.tau)).sum();
    let total = alpha.alpha_tp * loc_sum
        + alpha.alpha_fp * m.n_fp as f64
        + alpha.alpha_fn * m.n_fn as f64;
    Ok(Some(total / z))
}

/// Arithmetic mean over the defined entries; `None` when all are undefined.
pub fn mean_defined<I>(values: I) -> Option<f64>
where
    I: IntoIterator<Item = Option<f64>>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values.into_iter().flatten() {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Field-wise class aggregate of LRP results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpSummary {
    pub lrp: Option<f64>,
    #[serde(rename = "loc")]
    pub loc_err: Option<f64>,
    #[serde(rename = "fp")]
    pub fp_err: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_err: Option<f64>,
}

/// Mean per field over classes where that field is defined; undefined
/// fields are skipped independently per field.
pub fn aggregate_classes(per_class: &[LrpResult]) -> Result<LrpSummary> {
    let summary = LrpSummary {
        lrp: mean_defined(per_class.iter().map(|r| r.lrp)),
        loc_err: mean_defined(per_class.iter().map(|r| r.loc_err)),
        fp_err: mean_defined(per_class.iter().map(|r| r.fp_err)),
        fn_err: mean_defined(per_class.iter().map(|r| r.fn_err)),
    };
    if summary.lrp.is_none() {
        return Err(Error::Undefined("no class has a defined LRP value".into()));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(tp_lqs: Vec<f64>, n_fp: usize, n_fn: usize, tau: f64) -> LrpResult {
        let m = MatchResult::from_counts(tp_lqs, n_fp, n_fn, tau).unwrap();
        lrp(&m).unwrap()
    }

    #[test]
    fn perfect_detection_is_zero() {
        let r = result(vec![1.0, 1.0, 1.0], 0, 0, 0.5);
        assert_eq!(r.lrp, Some(0.0));
        assert_eq!(r.loc_err, Some(0.0));
        assert_eq!(r.fp_err, Some(0.0));
        assert_eq!(r.fn_err, Some(0.0));
    }

    #[test]
    fn no_tp_is_maximal_error() {
        let r = result(vec![], 2, 3, 0.5);
        assert_eq!(r.lrp, Some(1.0));
        assert_eq!(r.loc_err, None);
        assert_eq!(r.fp_err, Some(1.0));
        assert_eq!(r.fn_err, Some(1.0));
    }

    #[test]
    fn hand_evaluated_fixture() {
        let r = result(vec![0.75], 1, 1, 0.5);
        assert!((r.lrp.unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.loc_err.unwrap() - 0.25).abs() < 1e-12);
        assert!((r.fp_err.unwrap() - 0.5).abs() < 1e-12);
        assert!((r.fn_err.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.z, 3.0);
        assert_eq!(r.w_loc, 2.0);
        assert_eq!(r.w_fp, 2.0);
        assert_eq!(r.w_fn, 2.0);
    }

    #[test]
    fn empty_match_is_undefined() {
        let r = result(vec![], 0, 0, 0.5);
        assert_eq!(r.lrp, None);
    }

    #[test]
    fn tp_quality_at_tau_rejected() {
        assert!(MatchResult::from_counts(vec![0.5], 0, 0, 0.5).is_err());
    }

    #[test]
    fn uniform_weights_reduce_to_plain_lrp() {
        let m = MatchResult::from_counts(vec![0.75], 1, 1, 0.5).unwrap();
        let plain = lrp(&m).unwrap().lrp.unwrap();
        let weighted = lrp_weighted(&m, &ImportanceWeights::default()).unwrap().unwrap();
        assert!((plain - weighted).abs() < 1e-15);
    }

    #[test]
    fn weighted_hand_fixture() {
        let m = MatchResult::from_counts(vec![0.75], 1, 1, 0.5).unwrap();
        let alpha = ImportanceWeights::new(1.0, 1.0, 2.0).unwrap();
        let v = lrp_weighted(&m, &alpha).unwrap().unwrap();
        assert!((v - 0.875).abs() < 1e-12);
    }

    #[test]
    fn weighted_scale_invariance() {
        let m = MatchResult::from_counts(vec![0.8, 0.6], 3, 2, 0.5).unwrap();
        let a = lrp_weighted(&m, &ImportanceWeights::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        let b = lrp_weighted(&m, &ImportanceWeights::new(7.0, 7.0, 7.0).unwrap()).unwrap();
        assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_two_point_mean() {
        let a = result(vec![], 2, 3, 0.5); // lrp 1.0 scaled below
        let mut a = a;
        a.lrp = Some(0.4);
        let mut b = result(vec![], 1, 1, 0.5);
        b.lrp = Some(0.6);
        let s = aggregate_classes(&[a, b]).unwrap();
        assert!((s.lrp.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aggregate_skips_undefined_fields_independently() {
        let a = result(vec![], 1, 2, 0.5); // loc undefined
        let mut a = a;
        a.lrp = Some(0.4);
        let mut b = result(vec![0.8], 1, 1, 0.5);
        b.lrp = Some(0.6);
        b.loc_err = Some(0.2);
        let s = aggregate_classes(&[a, b]).unwrap();
        assert!((s.lrp.unwrap() - 0.5).abs() < 1e-15);
        assert!((s.loc_err.unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn aggregate_single_class_verbatim() {
        let a = result(vec![0.75], 1, 1, 0.5);
        let s = aggregate_classes(&[a]).unwrap();
        assert_eq!(s.lrp, a.lrp);
        assert_eq!(s.loc_err, a.loc_err);
        assert_eq!(s.fp_err, a.fp_err);
        assert_eq!(s.fn_err, a.fn_err);
    }

    #[test]
    fn aggregate_all_undefined_is_error() {
        let a = result(vec![], 0, 0, 0.5);
        assert!(matches!(aggregate_classes(&[a]), Err(Error::Undefined(_))));
    }

    #[test]
    fn continuity_at_the_tp_boundary() {
        // One GT, one detection: as lq decreases to tau the TP branch tends
        // to the FP/FN value 1.
        let tau = 0.5;
        let eps = 1e-9;
        let at = result(vec![tau + eps], 0, 0, tau).lrp.unwrap();
        let below = result(vec![], 1, 1, tau).lrp.unwrap();
        assert!((below - 1.0).abs() < 1e-15);
        assert!((at - below).abs() < 3.0 * eps);
    }

    fn arb_match(tau: f64) -> impl Strategy<Value = MatchResult> {
        (
            proptest::collection::vec((tau + 1e-9)..1.0f64, 0..8),
            0usize..8,
            0usize..8,
        )
            .prop_map(move |(lqs, n_fp, n_fn)| {
                MatchResult::from_counts(lqs, n_fp, n_fn, tau).unwrap()
            })
    }

    proptest! {
        #[test]
        fn lrp_range_and_extremes(m in arb_match(0.5)) {
            let r = lrp(&m).unwrap();
            if let Some(v) = r.lrp {
                prop_assert!((0.0..=1.0).contains(&v));
                if m.n_tp == 0 {
                    prop_assert_eq!(v, 1.0);
                }
                if v == 0.0 {
                    prop_assert!(m.n_fp == 0 && m.n_fn == 0);
                    prop_assert!(m.tp_lqs.iter().all(|&q| q == 1.0));
                }
            } else {
                prop_assert_eq!(m.n_tp + m.n_fp + m.n_fn, 0);
            }
        }

        #[test]
        fn recombination_identity(m in arb_match(0.5)) {
            // compact form == weighted-component form
            let r = lrp(&m).unwrap();
            if let Some(v) = r.lrp {
                let combined = r.w_loc * r.loc_err.unwrap_or(0.0)
                    + r.w_fp * r.fp_err.unwrap_or(0.0)
                    + r.w_fn * r.fn_err.unwrap_or(0.0);
                prop_assert!((v - combined / r.z).abs() < 1e-12);
            }
        }

        #[test]
        fn upper_bound_on_precision_and_recall_errors(m in arb_match(0.5)) {
            let r = lrp(&m).unwrap();
            if let (Some(v), Some(fp), Some(fn_)) = (r.lrp, r.fp_err, r.fn_err) {
                prop_assert!(v >= fp - 1e-12);
                prop_assert!(v >= fn_ - 1e-12);
            }
        }
    }
}

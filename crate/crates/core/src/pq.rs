//! Panoptic Quality, its SQ/RQ split, and the error-form identity that
//! rewrites `1 - PQ` in the same shape as LRP Error.
//!
//! PQ is defined for matches made at the fixed criterion `tau = 0.5`:
//!
//! ```text
//! PQ = sum_i lq_i / (n_tp + n_fp / 2 + n_fn / 2)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchResult;

pub const PQ_TAU: f64 = 0.5;

/// Panoptic quality with its segmentation/recognition split.
/// When defined, `pq == sq * rq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqResult {
    pub pq: Option<f64>,
    /// Mean TP quality; `None` when there are no TPs.
    pub sq: Option<f64>,
    pub rq: Option<f64>,
}

fn check_pq_tau(m: &MatchResult) -> Result<()> {
    if m.tau != PQ_TAU {
        return Err(Error::Config(format!(
            "PQ requires matches made at tau = 0.5, got {}",
            m.tau
        )));
    }
    Ok(())
}

pub fn pq(m: &MatchResult) -> Result<PqResult> {
    check_pq_tau(m)?;
    let denom = m.n_tp as f64 + 0.5 * m.n_fp as f64 + 0.5 * m.n_fn as f64;
    if denom == 0.0 {
        return Ok(PqResult { pq: None, sq: None, rq: None });
    }
    let lq_sum: f64 = m.tp_lqs.iter().sum();
    Ok(PqResult {
        pq: Some(lq_sum / denom),
        sq: (m.n_tp > 0).then(|| lq_sum / m.n_tp as f64),
        rq: Some(m.n_tp as f64 / denom),
    })
}

/// The LRP-shaped form of PQ Error:
///
/// ```text
/// (sum_i (1 - lq_i) / (1 - 0.5) + n_fp + n_fn) / (2 n_tp + n_fp + n_fn)
/// ```
///
/// Equal to `1 - PQ` whenever PQ is defined; `None` when the denominator
/// is zero.
pub fn pq_error_identity(m: &MatchResult) -> Result<Option<f64>> {
    check_pq_tau(m)?;
    let z_hat = 2.0 * m.n_tp as f64 + m.n_fp as f64 + m.n_fn as f64;
    if z_hat == 0.0 {
        return Ok(None);
    }
    let loc_sum: f64 = m.tp_lqs.iter().map(|&q| (1.0 - q) / (1.0 - PQ_TAU)).sum();
    Ok(Some((loc_sum + m.n_fp as f64 + m.n_fn as f64) / z_hat))
}

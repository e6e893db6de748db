//! Detection-evaluation metrics over boxes, masks and keypoints.
//!
//! The crate computes LRP Error and its components, Optimal LRP with the
//! LRP-Optimal score threshold, Panoptic Quality with its SQ/RQ split, and
//! the AP/AR family (exact and 101-point AUC, threshold-averaged), plus the
//! property machinery relating them: the PQ error identity, the assignment
//! -metric oracle LRP reduces to, analytic error surfaces, and triangle
//! -inequality probes.
//!
//! The pipeline is `dataset` (COCO-like JSON in) -> `matching` (TP/FP/FN
//! assignment per class and image) -> metric modules -> `eval` (per-class
//! reports, detector means, serialization).

pub mod analysis;
pub mod ap;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod lrp;
pub mod matching;
pub mod olrp;
pub mod pq;
pub mod synthetic;

pub use ap::{ap_101, ap_at_tau, ap_coco, ap_exact, average_recall, pr_curve, ApResult, PrCurve, PrPoint, COCO_TAUS};
pub use dataset::{Category, DatasetPair, GroundTruthSet, GroupTag, ImageInfo, Task};
pub use error::{Error, Result};
pub use eval::{run_evaluate, ApReport, ClassReport, EvalConfig, MeanReport, MetricKind, Report};
pub use geometry::{box_iou, mask_iou, oks, BoundingBox, Geometry, Keypoint, KeypointSet, LocQuality, LqKind, Mask};
pub use lrp::{aggregate_classes, lrp, lrp_weighted, ImportanceWeights, LrpResult, LrpSummary};
pub use matching::{filter_detections, filter_ground_truths, match_hard, match_soft, FilterSpec, Instance, MatchResult};
pub use olrp::{alrp, olrp, s_lrp_curve, tau_sweep, OlrpResult, SLrpCurve, SLrpKnot};
pub use pq::{pq, pq_error_identity, PqResult, PQ_TAU};

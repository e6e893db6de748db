//! Evaluation orchestration: per-class metric computation over a dataset,
//! detector-level and group means, and report serialization.
//!
//! Evaluation is deterministic: classes are processed independently (in
//! parallel) and folded in ascending class-id order, so identical inputs
//! produce identical reports regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ap::{ap_at_tau, ap_coco, ap_hard_single_point, average_recall, ApResult};
use crate::dataset::{Category, DatasetPair, GroupTag, Task};
use crate::error::{Error, Result};
use crate::geometry::{LocQuality, LqKind};
use crate::lrp::{lrp, lrp_weighted, mean_defined, ImportanceWeights, LrpResult};
use crate::matching::{
    filter_detections, filter_ground_truths, match_hard, match_soft, FilterSpec, Instance,
    MatchResult,
};
use crate::olrp::{olrp, s_lrp_curve, OlrpResult, SLrpCurve};
use crate::pq::{pq, PqResult, PQ_TAU};

/// A metric family the evaluation can be asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Lrp,
    Olrp,
    Pq,
    Ap,
    Ar,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrp" => Ok(MetricKind::Lrp),
            "olrp" => Ok(MetricKind::Olrp),
            "pq" => Ok(MetricKind::Pq),
            "ap" => Ok(MetricKind::Ap),
            "ar" => Ok(MetricKind::Ar),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Full configuration of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub task: Task,
    pub tau: f64,
    pub lq: LqKind,
    pub filter: FilterSpec,
    pub alpha: ImportanceWeights,
    pub metrics: BTreeSet<MetricKind>,
    /// Per-image detection budget of the averaged-recall metric.
    pub ar_top_k: usize,
    /// Attach per-class s-LRP curves to the report.
    pub include_curves: bool,
}

impl EvalConfig {
    /// Defaults for a task: `tau = 0.5`, no filtering, uniform importance
    /// weights; soft tasks report LRP/oLRP/AP/AR, panoptic reports LRP/PQ.
    pub fn new(task: Task) -> Self {
        let metrics: BTreeSet<MetricKind> = match task {
            Task::Panoptic => [MetricKind::Lrp, MetricKind::Pq].into(),
            _ => [MetricKind::Lrp, MetricKind::Olrp, MetricKind::Ap, MetricKind::Ar].into(),
        };
        EvalConfig {
            task,
            tau: 0.5,
            lq: task.lq_kind(),
            filter: FilterSpec::default(),
            alpha: ImportanceWeights::default(),
            metrics,
            ar_top_k: 100,
            include_curves: false,
        }
    }

    fn validate(&self, soft: bool) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1)", self.tau)));
        }
        self.filter.validate()?;
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        if self.task == Task::Panoptic {
            if self.tau != PQ_TAU {
                return Err(Error::Config("the panoptic task fixes tau = 0.5".into()));
            }
            if soft {
                return Err(Error::Config(
                    "the panoptic task evaluates hard predictions; drop the scores".into(),
                ));
            }
        }
        if self.metrics.contains(&MetricKind::Pq) && self.tau != PQ_TAU {
            return Err(Error::Config("PQ requires tau = 0.5".into()));
        }
        if !soft {
            for needs_scores in [MetricKind::Olrp, MetricKind::Ar] {
                if self.metrics.contains(&needs_scores) {
                    return Err(Error::Config(format!(
                        "{needs_scores:?} requires soft predictions"
                    )));
                }
            }
            if self.metrics.contains(&MetricKind::Ap) {
                warnings.push(
                    "AP of hard predictions uses the single-point convention \
                     precision * recall"
                        .to_string(),
                );
            }
        }
        if self.ar_top_k < 1 {
            return Err(Error::Config("ar_top_k must be at least 1".into()));
        }
        Ok(warnings)
    }
}

/// AP family values of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub tau: f64,
    pub ap_exact: Option<f64>,
    pub ap_101: Option<f64>,
    pub ap_coco: Option<f64>,
    /// The hard-prediction convention, when it was used.
    pub single_point: Option<f64>,
}

/// Every requested metric of one class; absent values are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: i64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupTag>,
    pub gt_count: usize,
    pub det_count: usize,
    pub lrp: Option<LrpResult>,
    pub weighted_lrp: Option<f64>,
    pub olrp: Option<OlrpResult>,
    pub pq: Option<PqResult>,
    pub ap: Option<ApReport>,
    pub ar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slrp_curve: Option<SLrpCurve>,
}

/// Field-wise means over the classes where each field is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanReport {
    pub lrp: Option<f64>,
    pub loc: Option<f64>,
    pub fp: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_: Option<f64>,
    pub weighted_lrp: Option<f64>,
    pub olrp: Option<f64>,
    pub olrp_loc: Option<f64>,
    pub olrp_fp: Option<f64>,
    pub olrp_fn: Option<f64>,
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
    pub ap_exact: Option<f64>,
    pub ap_101: Option<f64>,
    pub ap_coco: Option<f64>,
    pub ap_single_point: Option<f64>,
    pub ar: Option<f64>,
}

/// The result of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub engine_version: String,
    pub config: EvalConfig,
    pub gt_digest: Option<String>,
    pub dt_digest: Option<String>,
    pub warnings: Vec<String>,
    pub per_class: Vec<ClassReport>,
    pub means: MeanReport,
    pub groups: BTreeMap<String, MeanReport>,
}

struct ClassInput<'a> {
    category: &'a Category,
    gts: Vec<Instance>,
    dets: Vec<Instance>,
}

/// Evaluate a dataset under a configuration.
pub fn run_evaluate(pair: &DatasetPair, cfg: &EvalConfig) -> Result<Report> {
    let soft = detections_are_soft(&pair.detections)?;
    let warnings = cfg.validate(soft)?;

    let by_category: HashMap<i64, &Category> = pair.categories.iter().map(|c| (c.id, c)).collect();
    for inst in pair.ground_truths.iter().chain(&pair.detections) {
        if !by_category.contains_key(&inst.class_id) {
            return Err(Error::DanglingReference(format!(
                "instance references unknown class {}",
                inst.class_id
            )));
        }
    }

    let ground_truths = filter_ground_truths(&pair.ground_truths, &cfg.filter);
    let detections = filter_detections(&pair.detections, &cfg.filter)?;

    let mut inputs: BTreeMap<i64, ClassInput> = pair
        .categories
        .iter()
        .map(|c| (c.id, ClassInput { category: c, gts: Vec::new(), dets: Vec::new() }))
        .collect();
    for g in ground_truths {
        inputs.get_mut(&g.class_id).unwrap().gts.push(g);
    }
    for d in detections {
        inputs.get_mut(&d.class_id).unwrap().dets.push(d);
    }

    let inputs: Vec<ClassInput> = inputs.into_values().collect();
    let mut per_class = inputs
        .par_iter()
        .map(|input| evaluate_class(input, cfg, soft))
        .collect::<Result<Vec<ClassReport>>>()?;
    per_class.sort_by_key(|c| c.class_id);

    let means = summarize(per_class.iter());
    let mut groups = BTreeMap::new();
    for (tag, name) in [(GroupTag::Things, "things"), (GroupTag::Stuff, "stuff")] {
        let members: Vec<&ClassReport> =
            per_class.iter().filter(|c| c.group == Some(tag)).collect();
        if !members.is_empty() {
            groups.insert(name.to_string(), summarize(members.into_iter()));
        }
    }

    Ok(Report {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        gt_digest: pair.gt_digest.clone(),
        dt_digest: pair.dt_digest.clone(),
        warnings,
        per_class,
        means,
        groups,
    })
}

fn detections_are_soft(detections: &[Instance]) -> Result<bool> {
    let scored = detections.iter().filter(|d| d.score.is_some()).count();
    if scored != 0 && scored != detections.len() {
        return Err(Error::Contract(format!(
            "mixed scored and unscored detections: {scored} of {}",
            detections.len()
        )));
    }
    Ok(scored > 0)
}

fn evaluate_class(input: &ClassInput, cfg: &EvalConfig, soft: bool) -> Result<ClassReport> {
    let ClassInput { category, gts, dets } = input;
    let mut report = ClassReport {
        class_id: category.id,
        name: category.name.clone(),
        group: category.group,
        gt_count: gts.len(),
        det_count: dets.len(),
        lrp: None,
        weighted_lrp: None,
        olrp: None,
        pq: None,
        ap: None,
        ar: None,
        slrp_curve: None,
    };
    if gts.is_empty() && dets.is_empty() {
        return Ok(report);
    }
    let lq_fn = |g: &Instance, d: &Instance| -> Result<LocQuality> {
        cfg.lq.eval(&g.geometry, &d.geometry)
    };

    if cfg.metrics.contains(&MetricKind::Lrp) {
        let pooled = pooled_match(gts, dets, &lq_fn, cfg.tau, soft)?;
        report.lrp = Some(lrp(&pooled)?);
        report.weighted_lrp = lrp_weighted(&pooled, &cfg.alpha)?;
    }

    if cfg.metrics.contains(&MetricKind::Olrp) {
        let curve = s_lrp_curve(gts, dets, &lq_fn, cfg.tau)?;
        report.olrp = olrp(&curve);
        if cfg.include_curves {
            report.slrp_curve = Some(curve);
        }
    }

    if cfg.metrics.contains(&MetricKind::Pq) {
        // PQ ignores confidence scores by definition.
        let pooled = pooled_match(gts, dets, &lq_fn, PQ_TAU, false)?;
        report.pq = Some(pq(&pooled)?);
    }

    if cfg.metrics.contains(&MetricKind::Ap) {
        report.ap = Some(if soft {
            if gts.is_empty() {
                ApReport {
                    tau: cfg.tau,
                    ap_exact: None,
                    ap_101: None,
                    ap_coco: None,
                    single_point: None,
                }
            } else {
                let ApResult { ap_exact, ap_101, tau } = ap_at_tau(gts, dets, &lq_fn, cfg.tau)?;
                ApReport {
                    tau,
                    ap_exact: Some(ap_exact),
                    ap_101: Some(ap_101),
                    ap_coco: Some(ap_coco(gts, dets, &lq_fn)?),
                    single_point: None,
                }
            }
        } else {
            let pooled = pooled_match(gts, dets, &lq_fn, cfg.tau, false)?;
            ApReport {
                tau: cfg.tau,
                ap_exact: None,
                ap_101: None,
                ap_coco: None,
                single_point: ap_hard_single_point(&pooled),
            }
        });
    }

    if cfg.metrics.contains(&MetricKind::Ar) && !gts.is_empty() {
        report.ar = Some(average_recall(gts, dets, &lq_fn, cfg.ar_top_k)?);
    }

    Ok(report)
}

/// Match one class image by image and pool the counts.
fn pooled_match<F>(
    gts: &[Instance],
    dets: &[Instance],
    lq_fn: &F,
    tau: f64,
    soft: bool,
) -> Result<MatchResult>
where
    F: Fn(&Instance, &Instance) -> Result<LocQuality>,
{
    let mut gts_by_image: BTreeMap<i64, Vec<Instance>> = BTreeMap::new();
    for g in gts {
        gts_by_image.entry(g.image_id).or_default().push(g.clone());
    }
    let mut dets_by_image: BTreeMap<i64, Vec<Instance>> = BTreeMap::new();
    for d in dets {
        dets_by_image.entry(d.image_id).or_default().push(d.clone());
    }
    let empty = Vec::new();
    let mut pooled = MatchResult::empty(tau);
    let image_ids: BTreeSet<i64> = gts_by_image.keys().chain(dets_by_image.keys()).copied().collect();
    for image_id in image_ids {
        let g = gts_by_image.get(&image_id).unwrap_or(&empty);
        let d = dets_by_image.get(&image_id).unwrap_or(&empty);
        let m = if soft {
            match_soft(g, d, lq_fn, tau)?
        } else {
            match_hard(g, d, lq_fn, tau)?
        };
        pooled.merge(&m)?;
    }
    Ok(pooled)
}

fn summarize<'a>(classes: impl Iterator<Item = &'a ClassReport>) -> MeanReport {
    let classes: Vec<&ClassReport> = classes.collect();
    let lrp_of = |f: fn(&LrpResult) -> Option<f64>| {
        mean_defined(classes.iter().map(|c| c.lrp.as_ref().and_then(f)))
    };
    let olrp_of = |f: fn(&OlrpResult) -> Option<f64>| {
        mean_defined(classes.iter().map(|c| c.olrp.as_ref().and_then(f)))
    };
    let pq_of = |f: fn(&PqResult) -> Option<f64>| {
        mean_defined(classes.iter().map(|c| c.pq.as_ref().and_then(f)))
    };
    let ap_of = |f: fn(&ApReport) -> Option<f64>| {
        mean_defined(classes.iter().map(|c| c.ap.as_ref().and_then(f)))
    };
    MeanReport {
        lrp: lrp_of(|r| r.lrp),
        loc: lrp_of(|r| r.loc_err),
        fp: lrp_of(|r| r.fp_err),
        fn_: lrp_of(|r| r.fn_err),
        weighted_lrp: mean_defined(classes.iter().map(|c| c.weighted_lrp)),
        olrp: olrp_of(|r| Some(r.olrp)),
        olrp_loc: olrp_of(|r| r.loc_err),
        olrp_fp: olrp_of(|r| r.fp_err),
        olrp_fn: olrp_of(|r| r.fn_err),
        pq: pq_of(|r| r.pq),
        sq: pq_of(|r| r.sq),
        rq: pq_of(|r| r.rq),
        ap_exact: ap_of(|r| r.ap_exact),
        ap_101: ap_of(|r| r.ap_101),
        ap_coco: ap_of(|r| r.ap_coco),
        ap_single_point: ap_of(|r| r.single_point),
        ar: mean_defined(classes.iter().map(|c| c.ar)),
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat per-class table with a trailing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "class_id,name,gt_count,det_count,lrp,loc,fp,fn,weighted_lrp,\
             olrp,olrp_loc,olrp_fp,olrp_fn,s_star,pq,sq,rq,\
             ap_exact,ap_101,ap_coco,ap_single_point,ar\n",
        );
        for c in &self.per_class {
            let cells = [
                c.class_id.to_string(),
                csv_escape(&c.name),
                c.gt_count.to_string(),
                c.det_count.to_string(),
                opt(c.lrp.as_ref().and_then(|r| r.lrp)),
                opt(c.lrp.as_ref().and_then(|r| r.loc_err)),
                opt(c.lrp.as_ref().and_then(|r| r.fp_err)),
                opt(c.lrp.as_ref().and_then(|r| r.fn_err)),
                opt(c.weighted_lrp),
                opt(c.olrp.as_ref().map(|o| o.olrp)),
                opt(c.olrp.as_ref().and_then(|o| o.loc_err)),
                opt(c.olrp.as_ref().and_then(|o| o.fp_err)),
                opt(c.olrp.as_ref().and_then(|o| o.fn_err)),
                opt(c.olrp.as_ref().and_then(|o| o.s_star)),
                opt(c.pq.as_ref().and_then(|p| p.pq)),
                opt(c.pq.as_ref().and_then(|p| p.sq)),
                opt(c.pq.as_ref().and_then(|p| p.rq)),
                opt(c.ap.as_ref().and_then(|a| a.ap_exact)),
                opt(c.ap.as_ref().and_then(|a| a.ap_101)),
                opt(c.ap.as_ref().and_then(|a| a.ap_coco)),
                opt(c.ap.as_ref().and_then(|a| a.single_point)),
                opt(c.ar),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let m = &self.means;
        let cells = [
            "mean".to_string(),
            String::new(),
            String::new(),
            String::new(),
            opt(m.lrp),
            opt(m.loc),
            opt(m.fp),
            opt(m.fn_),
            opt(m.weighted_lrp),
            opt(m.olrp),
            opt(m.olrp_loc),
            opt(m.olrp_fp),
            opt(m.olrp_fn),
            String::new(),
            opt(m.pq),
            opt(m.sq),
            opt(m.rq),
            opt(m.ap_exact),
            opt(m.ap_101),
            opt(m.ap_coco),
            opt(m.ap_single_point),
            opt(m.ar),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

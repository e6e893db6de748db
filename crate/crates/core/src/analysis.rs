//! Comparative machinery: analytic error surfaces over synthetic match
//! configurations, the assignment-metric oracle that LRP reduces to, and
//! metricity probes for the triangle inequality of LRP and PQ errors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{mask_iou, Mask};
use crate::lrp::lrp;
use crate::matching::{match_hard, Instance, MatchResult};
use crate::pq::pq;

/// Grid specification for the error surface: mean TP quality, TP count and
/// total error count axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub mean_lqs: Vec<f64>,
    pub n_tps: Vec<usize>,
    pub n_errs: Vec<usize>,
    pub tau: f64,
    /// Fraction of `n_err` attributed to false positives in the PR error.
    pub fp_share: f64,
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mean_lqs.is_empty() || self.n_tps.is_empty() || self.n_errs.is_empty() {
            return Err(Error::Config("surface grids must be nonempty".into()));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1)", self.tau)));
        }
        if self.mean_lqs.iter().any(|&m| !(m > self.tau && m <= 1.0)) {
            return Err(Error::Config("mean quality must lie in (tau, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.fp_share) {
            return Err(Error::Config(format!("fp share {} outside [0, 1]", self.fp_share)));
        }
        Ok(())
    }
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            mean_lqs: (0..10).map(|i| 0.55 + 0.05 * i as f64).collect(),
            n_tps: (1..=20).collect(),
            n_errs: (0..=20).collect(),
            tau: 0.5,
            fp_share: 0.5,
        }
    }
}

/// One evaluated grid point of the error surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub mean_lq: f64,
    pub n_tp: usize,
    pub n_err: usize,
    pub lrp: f64,
    pub pr_error: f64,
    pub pq_error: f64,
}

/// Analytic evaluation of LRP Error, PR Error (`1 - precision * recall`)
/// and PQ Error (`1 - PQ`) over the grid. Grid points with nothing to
/// evaluate (`n_tp + n_err == 0`) are skipped.
pub fn error_surface(spec: &SurfaceSpec) -> Result<Vec<SurfaceRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &mean_lq in &spec.mean_lqs {
        for &n_tp in &spec.n_tps {
            for &n_err in &spec.n_errs {
                let tp = n_tp as f64;
                let err = n_err as f64;
                if tp + err == 0.0 {
                    continue;
                }
                let lrp = (tp * (1.0 - mean_lq) / (1.0 - spec.tau) + err) / (tp + err);
                let pq_error = (tp * (1.0 - mean_lq) / 0.5 + err) / (2.0 * tp + err);
                let n_fp = err * spec.fp_share;
                let n_fn = err - n_fp;
                let precision = if tp + n_fp > 0.0 { tp / (tp + n_fp) } else { 0.0 };
                let recall = if tp + n_fn > 0.0 { tp / (tp + n_fn) } else { 0.0 };
                let pr_error = 1.0 - precision * recall;
                rows.push(SurfaceRow { mean_lq, n_tp, n_err, lrp, pr_error, pq_error });
            }
        }
    }
    Ok(rows)
}

pub const SURFACE_CSV_HEADER: &str = "mean_lq,n_tp,n_err,lrp,pr_error,pq_error";

/// Write surface rows as CSV under [`SURFACE_CSV_HEADER`].
pub fn write_surface_csv<W: Write>(out: &mut W, rows: &[SurfaceRow]) -> std::io::Result<()> {
    writeln!(out, "{SURFACE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mean_lq, r.n_tp, r.n_err, r.lrp, r.pr_error, r.pq_error
        )?;
    }
    Ok(())
}

/// The deficiency-aware subpattern assignment error with cutoff `c` and
/// norm order `p`; only the `p = 1` reduction is supported:
///
/// ```text
/// ( sum_i d_i + c * n_fp + c * n_fn ) / (n_tp + n_fp + n_fn)
/// ```
///
/// with `d_i = 1 - lq_i`. Dividing by `c = 1 - tau` recovers the LRP Error
/// of the same match exactly.
pub fn dasa_error(m: &MatchResult, c: f64, p: u32) -> Result<f64> {
    if p != 1 {
        return Err(Error::Unsupported(format!("assignment error with norm order {p}")));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Config(format!("cutoff {c} outside (0, 1]")));
    }
    let z = (m.n_tp + m.n_fp + m.n_fn) as f64;
    if z == 0.0 {
        return Err(Error::Undefined("assignment error of an empty configuration".into()));
    }
    let mut distance_sum = 0.0;
    for &lq in &m.tp_lqs {
        let d = 1.0 - lq;
        if !(d < c) {
            return Err(Error::Contract(format!(
                "TP distance {d} reaches the cutoff {c}"
            )));
        }
        distance_sum += d;
    }
    Ok((distance_sum + c * (m.n_fp + m.n_fn) as f64) / z)
}

/// Three instance sets over a shared grid of masks, each set pairwise
/// disjoint so matching at `tau = 0.5` is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SetTriple {
    pub x: Vec<Mask>,
    pub y: Vec<Mask>,
    pub z: Vec<Mask>,
}

impl SetTriple {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [("x", &self.x), ("y", &self.y), ("z", &self.z)] {
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    if set[i].intersects(&set[j]) {
                        return Err(Error::Contract(format!(
                            "masks {i} and {j} of set {name} overlap"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn mask_instances(masks: &[Mask]) -> Vec<Instance> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| Instance::hard(0, 0, crate::geometry::Geometry::Mask(m.clone()), i))
        .collect()
}

fn mask_lq(g: &Instance, d: &Instance) -> Result<crate::geometry::LocQuality> {
    match (&g.geometry, &d.geometry) {
        (crate::geometry::Geometry::Mask(a), crate::geometry::Geometry::Mask(b)) => mask_iou(a, b),
        _ => Err(Error::Contract("mask sets expected".into())),
    }
}

/// LRP Error between two mask sets (first as ground truth) at `tau = 0.5`.
pub fn lrp_between(gts: &[Mask], dets: &[Mask]) -> Result<Option<f64>> {
    let m = match_hard(&mask_instances(gts), &mask_instances(dets), mask_lq, 0.5)?;
    Ok(lrp(&m)?.lrp)
}

/// PQ Error (`1 - PQ`) between two mask sets at the fixed `tau = 0.5`.
pub fn pq_error_between(gts: &[Mask], dets: &[Mask]) -> Result<Option<f64>> {
    let m = match_hard(&mask_instances(gts), &mask_instances(dets), mask_lq, 0.5)?;
    Ok(pq(&m)?.pq.map(|v| 1.0 - v))
}

/// A triple for which the checked error exceeded the two-leg sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleViolation {
    pub index: usize,
    pub direct: f64,
    pub via: f64,
}

/// Check `LRP(X, Y) <= LRP(X, Z) + LRP(Z, Y)` over the triples; the
/// returned list is expected to stay empty.
pub fn lrp_triangle_probe(triples: &[SetTriple]) -> Result<Vec<TriangleViolation>> {
    let mut violations = Vec::new();
    for (index, t) in triples.iter().enumerate() {
        t.validate()?;
        let direct = lrp_between(&t.x, &t.y)?;
        let leg_a = lrp_between(&t.x, &t.z)?;
        let leg_b = lrp_between(&t.z, &t.y)?;
        if let (Some(direct), Some(a), Some(b)) = (direct, leg_a, leg_b) {
            if direct > a + b + 1e-12 {
                violations.push(TriangleViolation { index, direct, via: a + b });
            }
        }
    }
    Ok(violations)
}

fn random_rect(rng: &mut ChaCha8Rng, grid: usize) -> Mask {
    loop {
        let a = rng.gen_range(0..grid);
        let b = rng.gen_range(0..grid);
        let c = rng.gen_range(0..grid);
        let d = rng.gen_range(0..grid);
        let (r0, r1) = (a.min(b), a.max(b) + 1);
        let (c0, c1) = (c.min(d), c.max(d) + 1);
        if let Ok(m) = Mask::from_rect(grid, grid, r0, r1, c0, c1) {
            return m;
        }
    }
}

/// A random set of 1..=`max_masks` pairwise disjoint rectangle masks.
pub fn random_disjoint_mask_set(rng: &mut ChaCha8Rng, grid: usize, max_masks: usize) -> Vec<Mask> {
    let count = rng.gen_range(1..=max_masks);
    let mut set: Vec<Mask> = Vec::new();
    let mut attempts = 0;
    while set.len() < count && attempts < 50 {
        attempts += 1;
        let m = random_rect(rng, grid);
        if set.iter().all(|s| !s.intersects(&m)) {
            set.push(m);
        }
    }
    set
}

/// A random triple of disjoint-mask sets on a `grid x grid` canvas.
pub fn random_set_triple(rng: &mut ChaCha8Rng, grid: usize) -> SetTriple {
    SetTriple {
        x: random_disjoint_mask_set(rng, grid, 3),
        y: random_disjoint_mask_set(rng, grid, 3),
        z: random_disjoint_mask_set(rng, grid, 3),
    }
}

/// Search for a triple where PQ Error violates the triangle inequality:
/// `1 - PQ(X, Y) > (1 - PQ(X, Z)) + (1 - PQ(Z, Y))`.
///
/// Alternates uniform random rectangles with a biased proposal that carves
/// X and Y out of opposite ends of a base rectangle Z, which concentrates
/// probes near the TP validation boundary where the violation lives.
/// Returns `None` if the budget is exhausted.
pub fn pq_triangle_search(grid: usize, budget: usize, seed: u64) -> Result<Option<SetTriple>> {
    if grid < 3 {
        return Err(Error::Config("grid too small to host a violation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..budget {
        let triple = if trial % 2 == 0 {
            let base = random_rect(&mut rng, grid);
            match carve_chain(&mut rng, &base, grid) {
                Some(t) => t,
                None => continue,
            }
        } else {
            SetTriple {
                x: vec![random_rect(&mut rng, grid)],
                y: vec![random_rect(&mut rng, grid)],
                z: vec![random_rect(&mut rng, grid)],
            }
        };
        let direct = pq_error_between(&triple.x, &triple.y)?;
        let leg_a = pq_error_between(&triple.x, &triple.z)?;
        let leg_b = pq_error_between(&triple.z, &triple.y)?;
        if let (Some(direct), Some(a), Some(b)) = (direct, leg_a, leg_b) {
            if direct > a + b + 1e-9 {
                return Ok(Some(triple));
            }
        }
    }
    Ok(None)
}

/// X drops random columns from the right of the base, Y from the left:
/// both stay similar to Z while their mutual overlap can fall under the
/// matching threshold.
fn carve_chain(rng: &mut ChaCha8Rng, base: &Mask, grid: usize) -> Option<SetTriple> {
    let pixels = base.pixels();
    let (mut c0, mut c1) = (usize::MAX, 0usize);
    let (mut r0, mut r1) = (usize::MAX, 0usize);
    for &(r, c) in &pixels {
        c0 = c0.min(c);
        c1 = c1.max(c + 1);
        r0 = r0.min(r);
        r1 = r1.max(r + 1);
    }
    let width = c1 - c0;
    if width < 3 {
        return None;
    }
    let cut_left = rng.gen_range(1..width / 2 + 1);
    let cut_right = rng.gen_range(1..width / 2 + 1);
    let x = Mask::from_rect(grid, grid, r0, r1, c0, c1 - cut_right).ok()?;
    let y = Mask::from_rect(grid, grid, r0, r1, c0 + cut_left, c1).ok()?;
    Some(SetTriple { x: vec![x], y: vec![y], z: vec![base.clone()] })
}

/// A random match configuration with TP qualities in `(tau, 1]`, for
/// seeded identity and oracle probes.
pub fn random_match(rng: &mut ChaCha8Rng, tau: f64) -> MatchResult {
    let n_tp = rng.gen_range(0..12usize);
    let n_fp = rng.gen_range(0..12usize);
    let n_fn = rng.gen_range(0..12usize);
    let lqs: Vec<f64> = (0..n_tp)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            // lean on (tau, 1], excluding tau itself
            tau + (1.0 - tau) * (1.0 - u * 0.999999)
        })
        .collect();
    MatchResult::from_counts(lqs, n_fp, n_fn, tau).expect("generated qualities exceed tau")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_perfect_corner() {
        let spec = SurfaceSpec {
            mean_lqs: vec![1.0],
            n_tps: vec![5],
            n_errs: vec![0],
            ..SurfaceSpec::default()
        };
        let rows = error_surface(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].lrp, rows[0].pr_error, rows[0].pq_error), (0.0, 0.0, 0.0));
    }

    #[test]
    fn surface_hand_row() {
        let spec = SurfaceSpec {
            mean_lqs: vec![0.75],
            n_tps: vec![10],
            n_errs: vec![10],
            ..SurfaceSpec::default()
        };
        let row = error_surface(&spec).unwrap()[0];
        assert!((row.lrp - 0.75).abs() < 1e-12);
        assert!((row.pq_error - 0.5).abs() < 1e-12);
        assert!((row.pr_error - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn surface_no_tp_row() {
        let spec = SurfaceSpec {
            mean_lqs: vec![0.75],
            n_tps: vec![0],
            n_errs: vec![4],
            ..SurfaceSpec::default()
        };
        let row = error_surface(&spec).unwrap()[0];
        assert_eq!((row.lrp, row.pq_error, row.pr_error), (1.0, 1.0, 1.0));
    }

    #[test]
    fn surface_upper_bound_and_flatness() {
        // LRP bounds the error versions of precision, recall and PQ; the
        // combined 1 - P*R column exceeds it on purpose (it stacks two
        // error sources).
        let rows = error_surface(&SurfaceSpec::default()).unwrap();
        for row in &rows {
            let tp = row.n_tp as f64;
            let n_fp = row.n_err as f64 * 0.5;
            let n_fn = row.n_err as f64 - n_fp;
            let precision_error = n_fp / (tp + n_fp);
            let recall_error = n_fn / (tp + n_fn);
            assert!(row.lrp >= precision_error - 1e-12, "{row:?}");
            assert!(row.lrp >= recall_error - 1e-12, "{row:?}");
            assert!(row.lrp >= row.pq_error - 1e-12, "{row:?}");
        }
        // PR error ignores the quality axis; LRP is strictly decreasing in it
        let spec = SurfaceSpec::default();
        for &n_tp in &spec.n_tps {
            for &n_err in &spec.n_errs {
                let with = |m: f64| {
                    error_surface(&SurfaceSpec {
                        mean_lqs: vec![m],
                        n_tps: vec![n_tp],
                        n_errs: vec![n_err],
                        ..SurfaceSpec::default()
                    })
                    .unwrap()[0]
                };
                let low = with(0.6);
                let high = with(0.9);
                assert_eq!(low.pr_error, high.pr_error);
                assert!(high.lrp < low.lrp);
            }
        }
    }

    #[test]
    fn dasa_hand_fixture() {
        let m = MatchResult::from_counts(vec![0.75], 1, 1, 0.5).unwrap();
        let e = dasa_error(&m, 0.5, 1).unwrap();
        assert!((e - 5.0 / 12.0).abs() < 1e-12);
        let l = lrp(&m).unwrap().lrp.unwrap();
        assert!((e / 0.5 - l).abs() < 1e-12);
    }

    #[test]
    fn dasa_degenerate_cases() {
        let perfect = MatchResult::from_counts(vec![1.0, 1.0], 0, 0, 0.5).unwrap();
        assert_eq!(dasa_error(&perfect, 0.5, 1).unwrap(), 0.0);
        let no_tp = MatchResult::from_counts(vec![], 2, 3, 0.5).unwrap();
        assert!((dasa_error(&no_tp, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dasa_rejects_other_norms() {
        let m = MatchResult::from_counts(vec![0.9], 0, 0, 0.5).unwrap();
        assert!(matches!(dasa_error(&m, 0.5, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dasa_matches_lrp_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let tau = 0.5;
            let m = random_match(&mut rng, tau);
            if m.n_tp + m.n_fp + m.n_fn == 0 {
                continue;
            }
            let via_dasa = dasa_error(&m, 1.0 - tau, 1).unwrap() / (1.0 - tau);
            let direct = lrp(&m).unwrap().lrp.unwrap();
            assert!((via_dasa - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn reflexive_triple_has_no_violation() {
        let m = Mask::from_rect(8, 8, 1, 4, 1, 4).unwrap();
        let t = SetTriple { x: vec![m.clone()], y: vec![m.clone()], z: vec![m] };
        assert!(lrp_triangle_probe(&[t]).unwrap().is_empty());
    }

    #[test]
    fn lrp_triangle_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let triples: Vec<SetTriple> = (0..100).map(|_| random_set_triple(&mut rng, 16)).collect();
        assert!(lrp_triangle_probe(&triples).unwrap().is_empty());
    }

    #[test]
    fn pq_triangle_witness_found_and_cross_checked() {
        let triple = pq_triangle_search(8, 10_000, 42).unwrap().expect("witness exists");
        let direct = pq_error_between(&triple.x, &triple.y).unwrap().unwrap();
        let a = pq_error_between(&triple.x, &triple.z).unwrap().unwrap();
        let b = pq_error_between(&triple.z, &triple.y).unwrap().unwrap();
        assert!(direct > a + b, "{direct} vs {a} + {b}");
        // the same triple respects the LRP triangle inequality
        assert!(lrp_triangle_probe(std::slice::from_ref(&triple)).unwrap().is_empty());
    }

    #[test]
    fn overlapping_set_rejected() {
        let a = Mask::from_rect(8, 8, 0, 4, 0, 4).unwrap();
        let b = Mask::from_rect(8, 8, 2, 6, 2, 6).unwrap();
        let t = SetTriple { x: vec![a, b], y: vec![], z: vec![] };
        assert!(t.validate().is_err());
    }
}

//! Localisation-quality functions over boxes, masks and keypoint sets.
//!
//! All quality functions map a (ground truth, detection) pair into `[0, 1]`,
//! higher is better: IoU for boxes and masks, a Gaussian keypoint-similarity
//! kernel for keypoint sets. Masks are stored as uncompressed column-major
//! run-length encodings starting with a background run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A localisation quality value, guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LocQuality(f64);

impl LocQuality {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidGeometry(format!(
                "localisation quality {value} outside [0, 1]"
            )));
        }
        Ok(LocQuality(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// An axis-aligned box in continuous image coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite box coordinate".into()));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidGeometry(format!(
                "degenerate box [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    /// Build from `[x, y, width, height]` form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "non-positive box size {w}x{h}"
            )));
        }
        BoundingBox::new(x, y, x + w, y + h)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Intersection over union of two boxes, continuous-coordinate convention.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> LocQuality {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    LocQuality(inter / union)
}

/// A binary segmentation mask stored as uncompressed run lengths.
///
/// Runs are column-major (pixel order `(0,0), (1,0), ..., (0,1), ...` by
/// `(row, col)`) and start with a background run, which may be zero. The
/// stored form is canonical: no zero-length run other than a leading one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    runs: Vec<usize>,
}

impl Mask {
    /// Decode an uncompressed RLE into a mask, canonicalizing the runs.
    pub fn from_rle(runs: &[usize], height: usize, width: usize) -> Result<Self> {
        let total: usize = runs.iter().sum();
        if total != height * width {
            return Err(Error::InvalidRle(format!(
                "run lengths sum to {total}, expected {}x{} = {}",
                height,
                width,
                height * width
            )));
        }
        // Merge zero-length runs so equal pixel sets compare equal.
        let mut canonical: Vec<usize> = Vec::with_capacity(runs.len());
        let mut value = false;
        for &len in runs {
            if len == 0 {
                value = !value;
                continue;
            }
            let parity = canonical.len() % 2 == 1;
            if canonical.is_empty() {
                if value {
                    canonical.push(0); // leading zero background run
                }
                canonical.push(len);
            } else if parity != value {
                // same value as the previous emitted run
                *canonical.last_mut().unwrap() += len;
            } else {
                canonical.push(len);
            }
            value = !value;
        }
        if canonical.is_empty() && height * width > 0 {
            canonical.push(height * width); // all runs were zero-length
        }
        Ok(Mask {
            height,
            width,
            runs: canonical,
        })
    }

    /// Build a mask from explicit `(row, col)` foreground pixels.
    pub fn from_pixels<I>(height: usize, width: usize, pixels: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut bits = vec![false; height * width];
        for (row, col) in pixels {
            if row >= height || col >= width {
                return Err(Error::InvalidGeometry(format!(
                    "pixel ({row}, {col}) outside {height}x{width} grid"
                )));
            }
            bits[col * height + row] = true; // column-major
        }
        let mut runs = Vec::new();
        let mut value = false;
        let mut len = 0usize;
        for bit in bits {
            if bit == value {
                len += 1;
            } else {
                runs.push(len);
                value = bit;
                len = 1;
            }
        }
        runs.push(len);
        Mask::from_rle(&runs, height, width)
    }

    /// Build a mask whose foreground is an axis-aligned pixel rectangle,
    /// rows `r0..r1` and columns `c0..c1` (half-open).
    pub fn from_rect(height: usize, width: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<Self> {
        if r1 > height || c1 > width || r0 >= r1 || c0 >= c1 {
            return Err(Error::InvalidGeometry(format!(
                "rectangle rows {r0}..{r1} cols {c0}..{c1} invalid on {height}x{width} grid"
            )));
        }
        Mask::from_pixels(height, width, (r0..r1).flat_map(|r| (c0..c1).map(move |c| (r, c))))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The canonical run lengths (background first).
    pub fn runs(&self) -> &[usize] {
        &self.runs
    }

    /// Number of foreground pixels.
    pub fn foreground(&self) -> usize {
        self.runs.iter().skip(1).step_by(2).sum()
    }

    /// Decode to explicit `(row, col)` foreground pixels.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.foreground());
        let mut pos = 0usize;
        let mut value = false;
        for &len in &self.runs {
            if value {
                for p in pos..pos + len {
                    out.push((p % self.height, p / self.height));
                }
            }
            pos += len;
            value = !value;
        }
        out
    }

    /// Does the foreground of `self` intersect the foreground of `other`?
    pub fn intersects(&self, other: &Mask) -> bool {
        match mask_iou(self, other) {
            Ok(q) => q.value() > 0.0,
            Err(_) => false,
        }
    }
}

/// IoU over pixel sets. Two empty masks have IoU 0 rather than 0/0.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<LocQuality> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::ShapeMismatch(a.height, a.width, b.height, b.width));
    }
    // Walk both run lists in lockstep; count overlap of foreground segments.
    let mut inter = 0usize;
    let mut union = 0usize;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ra, mut rb) = (
        a.runs.first().copied().unwrap_or(0),
        b.runs.first().copied().unwrap_or(0),
    );
    let (mut va, mut vb) = (false, false);
    while ia < a.runs.len() && ib < b.runs.len() {
        let step = ra.min(rb);
        if step > 0 {
            if va && vb {
                inter += step;
            }
            if va || vb {
                union += step;
            }
        }
        ra -= step;
        rb -= step;
        if ra == 0 {
            ia += 1;
            if ia < a.runs.len() {
                ra = a.runs[ia];
            }
            va = !va;
        }
        if rb == 0 {
            ib += 1;
            if ib < b.runs.len() {
                rb = b.runs[ib];
            }
            vb = !vb;
        }
    }
    if union == 0 {
        return Ok(LocQuality(0.0));
    }
    LocQuality::new(inter as f64 / union as f64)
}

/// One keypoint of an object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// The keypoints of one object together with its scale and the
/// per-keypoint falloff constants of the keypoint schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    points: Vec<Keypoint>,
    scale: f64,
    kappas: Vec<f64>,
}

impl KeypointSet {
    pub fn new(points: Vec<Keypoint>, scale: f64, kappas: Vec<f64>) -> Result<Self> {
        if points.len() != kappas.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} keypoints but {} falloff constants",
                points.len(),
                kappas.len()
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidGeometry(format!("object scale {scale} must be > 0")));
        }
        if kappas.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::InvalidGeometry("falloff constants must be > 0".into()));
        }
        Ok(KeypointSet { points, scale, kappas })
    }

    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }
}

/// Keypoint similarity between a ground truth and a detection.
///
/// Averages `exp(-d_i^2 / (2 (S k_i)^2))` over the keypoints annotated
/// (visible) in the ground truth, with the scale `S` and falloffs `k_i`
/// taken from the ground-truth side.
pub fn oks(gt: &KeypointSet, det: &KeypointSet) -> Result<LocQuality> {
    if gt.points.len() != det.points.len() {
        return Err(Error::InvalidGeometry(format!(
            "keypoint schema mismatch: {} vs {} points",
            gt.points.len(),
            det.points.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((g, d), kappa) in gt.points.iter().zip(&det.points).zip(&gt.kappas) {
        if !g.visible {
            continue;
        }
        let d2 = (g.x - d.x).powi(2) + (g.y - d.y).powi(2);
        let denom = 2.0 * (gt.scale * kappa).powi(2);
        sum += (-d2 / denom).exp();
        count += 1;
    }
    if count == 0 {
        return Err(Error::Contract(
            "ground truth has no annotated keypoints".into(),
        ));
    }
    LocQuality::new(sum / count as f64)
}

/// The location payload of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Box(BoundingBox),
    Mask(Mask),
    Keypoints(KeypointSet),
}

impl Geometry {
    /// Surface area used by area-range partition filters: box area,
    /// foreground pixel count, or scale squared for keypoint sets.
    pub fn area(&self) -> f64 {
        match self {
            Geometry::Box(b) => b.area(),
            Geometry::Mask(m) => m.foreground() as f64,
            Geometry::Keypoints(k) => k.scale * k.scale,
        }
    }
}

/// Which localisation-quality function a task evaluates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LqKind {
    BoxIou,
    MaskIou,
    Oks,
}

impl LqKind {
    /// Evaluate the quality of `det` against `gt`.
    pub fn eval(self, gt: &Geometry, det: &Geometry) -> Result<LocQuality> {
        match (self, gt, det) {
            (LqKind::BoxIou, Geometry::Box(a), Geometry::Box(b)) => Ok(box_iou(a, b)),
            (LqKind::MaskIou, Geometry::Mask(a), Geometry::Mask(b)) => mask_iou(a, b),
            (LqKind::Oks, Geometry::Keypoints(a), Geometry::Keypoints(b)) => oks(a, b),
            _ => Err(Error::Contract(format!(
                "geometry does not match localisation-quality kind {self:?}"
            ))),
        }
    }
}

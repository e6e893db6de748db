//! Seeded synthetic datasets for benchmarks and scale tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Category, DatasetPair, ImageInfo};
use crate::geometry::{BoundingBox, Geometry};
use crate::matching::Instance;

/// Parameters of a synthetic box-detection workload.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub images: usize,
    pub classes: usize,
    pub detections: usize,
    pub image_side: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { seed: 17, images: 5000, classes: 80, detections: 100_000, image_side: 640.0 }
    }
}

/// Generate ground truths and soft detections of configurable size.
///
/// Roughly 70% of the detections jitter an existing ground truth (score
/// correlated with overlap); the rest are background false positives with
/// low scores.
pub fn synthetic_pair(spec: &SyntheticSpec) -> DatasetPair {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = spec.image_side;

    let categories: Vec<Category> = (1..=spec.classes as i64)
        .map(|id| Category { id, name: format!("class_{id}"), group: None, kappas: None })
        .collect();
    let images: Vec<ImageInfo> = (1..=spec.images as i64)
        .map(|id| ImageInfo { id, width: side as u32, height: side as u32 })
        .collect();

    let n_gt = spec.detections * 6 / 10;
    let mut ground_truths = Vec::with_capacity(n_gt);
    for i in 0..n_gt {
        let image_id = rng.gen_range(1..=spec.images as i64);
        let class_id = rng.gen_range(1..=spec.classes as i64);
        let w = rng.gen_range(8.0..side / 4.0);
        let h = rng.gen_range(8.0..side / 4.0);
        let x = rng.gen_range(0.0..side - w);
        let y = rng.gen_range(0.0..side - h);
        let geometry = Geometry::Box(BoundingBox::from_xywh(x, y, w, h).unwrap());
        ground_truths.push(Instance::hard(image_id, class_id, geometry, i));
    }

    let mut detections = Vec::with_capacity(spec.detections);
    for i in 0..spec.detections {
        let (image_id, class_id, geometry, base_score) = if !ground_truths.is_empty() && rng.gen_bool(0.7) {
            let gt = &ground_truths[rng.gen_range(0..ground_truths.len())];
            let b = match &gt.geometry {
                Geometry::Box(b) => b,
                _ => unreachable!(),
            };
            let (w, h) = (b.x2 - b.x1, b.y2 - b.y1);
            let jitter = rng.gen_range(0.0..0.45);
            let dx = jitter * w * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let dy = jitter * h * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let shifted = BoundingBox::new(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy).unwrap();
            (gt.image_id, gt.class_id, Geometry::Box(shifted), 1.0 - jitter)
        } else {
            let image_id = rng.gen_range(1..=spec.images as i64);
            let class_id = rng.gen_range(1..=spec.classes as i64);
            let w = rng.gen_range(8.0..side / 4.0);
            let h = rng.gen_range(8.0..side / 4.0);
            let x = rng.gen_range(0.0..side - w);
            let y = rng.gen_range(0.0..side - h);
            let geometry = Geometry::Box(BoundingBox::from_xywh(x, y, w, h).unwrap());
            (image_id, class_id, geometry, rng.gen_range(0.01..0.4))
        };
        let score = (base_score + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
        detections.push(Instance::soft(image_id, class_id, geometry, score, i).unwrap());
    }

    DatasetPair::from_parts(categories, images, ground_truths, detections)
}

//! Dataset ingestion: a minimal COCO-like JSON dialect for ground truths
//! plus a flat result array for detections.
//!
//! Ground-truth files carry `images`, `categories` and `annotations`; boxes
//! use `[x, y, width, height]` externally and are converted to corner form
//! internally. Masks are accepted only as uncompressed RLE objects
//! `{"size": [h, w], "counts": [...]}`. Keypoint falloff constants come
//! from the category (`kappas`); the per-object scale is the annotation's
//! `scale` field, defaulting to the square root of its area.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Geometry, Keypoint, KeypointSet, Mask};
use crate::matching::Instance;

/// The geometry dialect a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Box,
    Mask,
    Keypoints,
    Panoptic,
}

impl Task {
    pub fn lq_kind(self) -> crate::geometry::LqKind {
        match self {
            Task::Box => crate::geometry::LqKind::BoxIou,
            Task::Mask | Task::Panoptic => crate::geometry::LqKind::MaskIou,
            Task::Keypoints => crate::geometry::LqKind::Oks,
        }
    }
}

/// Category group for panoptic-style reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTag {
    Things,
    Stuff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: i64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupTag>,
    /// Per-keypoint falloff constants; required for the keypoints task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: i64,
    pub width: u32,
    pub height: u32,
}

/// Ground truths with their category and image tables.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    pub categories: Vec<Category>,
    pub images: Vec<ImageInfo>,
    pub instances: Vec<Instance>,
    pub digest: Option<String>,
}

/// A loaded evaluation input: ground truths and detections.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub categories: Vec<Category>,
    pub images: Vec<ImageInfo>,
    pub ground_truths: Vec<Instance>,
    pub detections: Vec<Instance>,
    pub gt_digest: Option<String>,
    pub dt_digest: Option<String>,
}

impl DatasetPair {
    /// Load and validate both sides of an evaluation input.
    pub fn load(gt_path: &Path, dt_path: &Path, task: Task) -> Result<DatasetPair> {
        let gt = load_ground_truth(gt_path, task)?;
        let (detections, dt_digest) = load_detections(dt_path, task, &gt)?;
        Ok(DatasetPair {
            categories: gt.categories,
            images: gt.images,
            ground_truths: gt.instances,
            detections,
            gt_digest: gt.digest,
            dt_digest: Some(dt_digest),
        })
    }

    /// Assemble a pair from in-memory parts (synthetic data, tests).
    pub fn from_parts(
        categories: Vec<Category>,
        images: Vec<ImageInfo>,
        ground_truths: Vec<Instance>,
        detections: Vec<Instance>,
    ) -> DatasetPair {
        DatasetPair {
            categories,
            images,
            ground_truths,
            detections,
            gt_digest: None,
            dt_digest: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawGroundTruth {
    images: Vec<RawImage>,
    categories: Vec<RawCategory>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Deserialize)]
struct RawImage {
    id: i64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct RawCategory {
    id: i64,
    name: String,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    kappas: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    #[serde(default)]
    id: Option<i64>,
    image_id: i64,
    category_id: i64,
    #[serde(default)]
    bbox: Option<serde_json::Value>,
    #[serde(default)]
    segmentation: Option<serde_json::Value>,
    #[serde(default)]
    keypoints: Option<Vec<f64>>,
    #[serde(default)]
    area: Option<f64>,
    #[serde(default)]
    scale: Option<f64>,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawRle {
    size: [usize; 2],
    counts: Vec<i64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

fn parse_bbox(value: &serde_json::Value, at: &str) -> Result<BoundingBox> {
    let arr: Vec<f64> = serde_json::from_value(value.clone())
        .map_err(|_| Error::schema(at, "bbox must be an array of four numbers"))?;
    if arr.len() != 4 {
        return Err(Error::schema(at, format!("bbox has {} entries, expected 4", arr.len())));
    }
    BoundingBox::from_xywh(arr[0], arr[1], arr[2], arr[3])
        .map_err(|e| Error::schema(at, e.to_string()))
}

fn parse_mask(value: &serde_json::Value, at: &str) -> Result<Mask> {
    if value.is_array() {
        return Err(Error::schema(
            at,
            "polygon segmentations are not supported; provide uncompressed RLE \
             {\"size\": [h, w], \"counts\": [...]}",
        ));
    }
    let rle: RawRle = serde_json::from_value(value.clone())
        .map_err(|e| Error::schema(at, format!("segmentation is not an RLE object: {e}")))?;
    let mut runs = Vec::with_capacity(rle.counts.len());
    for &c in &rle.counts {
        if c < 0 {
            return Err(Error::schema(at, format!("negative run length {c}")));
        }
        runs.push(c as usize);
    }
    Mask::from_rle(&runs, rle.size[0], rle.size[1]).map_err(|e| Error::schema(at, e.to_string()))
}

fn parse_keypoints(
    ann: &RawAnnotation,
    kappas: &[f64],
    at: &str,
) -> Result<KeypointSet> {
    let flat = ann
        .keypoints
        .as_ref()
        .ok_or_else(|| Error::schema(at, "keypoints field missing"))?;
    if flat.len() != kappas.len() * 3 {
        return Err(Error::schema(
            at,
            format!(
                "keypoints has {} values, expected {} (x, y, v per keypoint)",
                flat.len(),
                kappas.len() * 3
            ),
        ));
    }
    let points: Vec<Keypoint> = flat
        .chunks(3)
        .map(|c| Keypoint { x: c[0], y: c[1], visible: c[2] > 0.0 })
        .collect();
    let scale = match (ann.scale, ann.area) {
        (Some(s), _) => s,
        (None, Some(a)) if a > 0.0 => a.sqrt(),
        _ => {
            return Err(Error::schema(
                at,
                "keypoint annotation needs a positive scale or area",
            ))
        }
    };
    KeypointSet::new(points, scale, kappas.to_vec()).map_err(|e| Error::schema(at, e.to_string()))
}

fn annotation_geometry(
    ann: &RawAnnotation,
    task: Task,
    category: &Category,
    at: &str,
) -> Result<Geometry> {
    match task {
        Task::Box => {
            let value = ann
                .bbox
                .as_ref()
                .ok_or_else(|| Error::schema(at, "bbox field missing"))?;
            Ok(Geometry::Box(parse_bbox(value, at)?))
        }
        Task::Mask | Task::Panoptic => {
            let value = ann
                .segmentation
                .as_ref()
                .ok_or_else(|| Error::schema(at, "segmentation field missing"))?;
            Ok(Geometry::Mask(parse_mask(value, at)?))
        }
        Task::Keypoints => {
            let kappas = category.kappas.as_ref().ok_or_else(|| {
                Error::schema(
                    at,
                    format!("category {} has no kappas for the keypoints task", category.id),
                )
            })?;
            Ok(Geometry::Keypoints(parse_keypoints(ann, kappas, at)?))
        }
    }
}

fn parse_group(raw: &Option<String>, at: &str) -> Result<Option<GroupTag>> {
    match raw.as_deref() {
        None => Ok(None),
        Some("things") => Ok(Some(GroupTag::Things)),
        Some("stuff") => Ok(Some(GroupTag::Stuff)),
        Some(other) => Err(Error::schema(
            at,
            format!("unknown group {other:?}, expected \"things\" or \"stuff\""),
        )),
    }
}

/// Load and validate the ground-truth side of an evaluation input.
pub fn load_ground_truth(path: &Path, task: Task) -> Result<GroundTruthSet> {
    let bytes = std::fs::read(path)?;
    let digest = sha256_hex(&bytes);
    let raw: RawGroundTruth = serde_json::from_slice(&bytes)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;

    let mut categories = Vec::with_capacity(raw.categories.len());
    for (i, c) in raw.categories.iter().enumerate() {
        let at = format!("categories[{i}]");
        categories.push(Category {
            id: c.id,
            name: c.name.clone(),
            group: parse_group(&c.group, &at)?,
            kappas: c.kappas.clone(),
        });
    }
    let images: Vec<ImageInfo> = raw
        .images
        .iter()
        .map(|i| ImageInfo { id: i.id, width: i.width, height: i.height })
        .collect();

    let by_category: HashMap<i64, &Category> = categories.iter().map(|c| (c.id, c)).collect();
    let image_ids: std::collections::HashSet<i64> = images.iter().map(|i| i.id).collect();

    let mut instances = Vec::with_capacity(raw.annotations.len());
    for (i, ann) in raw.annotations.iter().enumerate() {
        let at = match ann.id {
            Some(id) => format!("annotations[{i}] (id {id})"),
            None => format!("annotations[{i}]"),
        };
        if ann.score.is_some() {
            return Err(Error::schema(&at, "ground-truth annotations must not carry scores"));
        }
        let category = by_category.get(&ann.category_id).ok_or_else(|| {
            Error::DanglingReference(format!("{at}: unknown category_id {}", ann.category_id))
        })?;
        if !image_ids.contains(&ann.image_id) {
            return Err(Error::DanglingReference(format!(
                "{at}: unknown image_id {}",
                ann.image_id
            )));
        }
        let geometry = annotation_geometry(ann, task, category, &at)?;
        let mut instance = Instance::hard(ann.image_id, ann.category_id, geometry, i);
        if let Some(area) = ann.area {
            instance = instance.with_area(area);
        }
        instances.push(instance);
    }
    Ok(GroundTruthSet { categories, images, instances, digest: Some(digest) })
}

/// Load the detection side: a flat JSON array of detection records, soft
/// (all scored) or hard (none scored). Input order assigns the tie-breaking
/// index.
pub fn load_detections(path: &Path, task: Task, gt: &GroundTruthSet) -> Result<(Vec<Instance>, String)> {
    let bytes = std::fs::read(path)?;
    let digest = sha256_hex(&bytes);
    let raw: Vec<RawAnnotation> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;

    let by_category: HashMap<i64, &Category> = gt.categories.iter().map(|c| (c.id, c)).collect();
    let image_ids: std::collections::HashSet<i64> = gt.images.iter().map(|i| i.id).collect();

    let mut scored = 0usize;
    let mut instances = Vec::with_capacity(raw.len());
    for (i, ann) in raw.iter().enumerate() {
        let at = format!("detections[{i}]");
        let category = by_category.get(&ann.category_id).ok_or_else(|| {
            Error::DanglingReference(format!("{at}: unknown category_id {}", ann.category_id))
        })?;
        if !image_ids.contains(&ann.image_id) {
            return Err(Error::DanglingReference(format!(
                "{at}: unknown image_id {}",
                ann.image_id
            )));
        }
        let geometry = annotation_geometry(ann, task, category, &at)?;
        let mut instance = match ann.score {
            Some(score) => {
                scored += 1;
                Instance::soft(ann.image_id, ann.category_id, geometry, score, i)
                    .map_err(|e| Error::schema(&at, e.to_string()))?
            }
            None => Instance::hard(ann.image_id, ann.category_id, geometry, i),
        };
        if let Some(area) = ann.area {
            instance = instance.with_area(area);
        }
        instances.push(instance);
    }
    if scored != 0 && scored != instances.len() {
        return Err(Error::schema(
            path.display().to_string(),
            format!(
                "mixed scored and unscored records: {scored} of {} carry scores",
                instances.len()
            ),
        ));
    }
    Ok((instances, digest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const MINIMAL_GT: &str = r#"{
        "images": [{"id": 1, "width": 100, "height": 100}],
        "categories": [{"id": 1, "name": "widget"}],
        "annotations": [{"id": 10, "image_id": 1, "category_id": 1, "bbox": [10, 10, 4, 6]}]
    }"#;

    #[test]
    fn minimal_ground_truth_loads() {
        let f = write_temp(MINIMAL_GT);
        let gt = load_ground_truth(f.path(), Task::Box).unwrap();
        assert_eq!(gt.instances.len(), 1);
        assert!(gt.digest.as_deref().unwrap().starts_with("sha256:"));
    }

    #[test]
    fn bbox_converted_to_corner_form() {
        let f = write_temp(MINIMAL_GT);
        let gt = load_ground_truth(f.path(), Task::Box).unwrap();
        match &gt.instances[0].geometry {
            Geometry::Box(b) => {
                assert_eq!((b.x1, b.y1, b.x2, b.y2), (10.0, 10.0, 14.0, 16.0));
            }
            other => panic!("expected a box, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_reference_named_in_error() {
        let text = MINIMAL_GT.replace("\"category_id\": 1", "\"category_id\": 99");
        let f = write_temp(&text);
        let err = load_ground_truth(f.path(), Task::Box).unwrap_err();
        assert!(err.to_string().contains("99"), "{err}");
    }

    #[test]
    fn non_positive_box_rejected() {
        let text = MINIMAL_GT.replace("[10, 10, 4, 6]", "[10, 10, 0, 6]");
        let f = write_temp(&text);
        assert!(matches!(
            load_ground_truth(f.path(), Task::Box),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn polygon_segmentation_rejected() {
        let text = r#"{
            "images": [{"id": 1, "width": 4, "height": 4}],
            "categories": [{"id": 1, "name": "blob"}],
            "annotations": [{"image_id": 1, "category_id": 1, "segmentation": [[0, 0, 1, 0, 1, 1]]}]
        }"#;
        let f = write_temp(text);
        let err = load_ground_truth(f.path(), Task::Mask).unwrap_err();
        assert!(err.to_string().contains("polygon"), "{err}");
    }

    #[test]
    fn rle_mask_loads() {
        let text = r#"{
            "images": [{"id": 1, "width": 2, "height": 2}],
            "categories": [{"id": 1, "name": "blob"}],
            "annotations": [{"image_id": 1, "category_id": 1, "segmentation": {"size": [2, 2], "counts": [1, 2, 1]}}]
        }"#;
        let f = write_temp(text);
        let gt = load_ground_truth(f.path(), Task::Mask).unwrap();
        match &gt.instances[0].geometry {
            Geometry::Mask(m) => assert_eq!(m.foreground(), 2),
            other => panic!("expected a mask, got {other:?}"),
        }
    }

    fn gt_set() -> (tempfile::NamedTempFile, GroundTruthSet) {
        let f = write_temp(MINIMAL_GT);
        let gt = load_ground_truth(f.path(), Task::Box).unwrap();
        (f, gt)
    }

    #[test]
    fn empty_detection_array() {
        let (_g, gt) = gt_set();
        let f = write_temp("[]");
        let (dets, _) = load_detections(f.path(), Task::Box, &gt).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn score_out_of_range_rejected() {
        let (_g, gt) = gt_set();
        let f = write_temp(
            r#"[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 1.2}]"#,
        );
        assert!(load_detections(f.path(), Task::Box, &gt).is_err());
    }

    #[test]
    fn equal_scores_get_distinct_indices() {
        let (_g, gt) = gt_set();
        let f = write_temp(
            r#"[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
                {"image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5], "score": 0.5}]"#,
        );
        let (dets, _) = load_detections(f.path(), Task::Box, &gt).unwrap();
        assert_eq!(dets[0].input_index, 0);
        assert_eq!(dets[1].input_index, 1);
    }

    #[test]
    fn mixed_scored_unscored_rejected() {
        let (_g, gt) = gt_set();
        let f = write_temp(
            r#"[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
                {"image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5]}]"#,
        );
        let err = load_detections(f.path(), Task::Box, &gt).unwrap_err();
        assert!(err.to_string().contains("mixed"), "{err}");
    }

    #[test]
    fn keypoints_need_category_kappas() {
        let text = r#"{
            "images": [{"id": 1, "width": 100, "height": 100}],
            "categories": [{"id": 1, "name": "pose"}],
            "annotations": [{"image_id": 1, "category_id": 1,
                             "keypoints": [5, 5, 2, 9, 9, 0], "area": 25}]
        }"#;
        let f = write_temp(text);
        let err = load_ground_truth(f.path(), Task::Keypoints).unwrap_err();
        assert!(err.to_string().contains("kappas"), "{err}");
    }

    #[test]
    fn keypoints_load_with_scale_from_area() {
        let text = r#"{
            "images": [{"id": 1, "width": 100, "height": 100}],
            "categories": [{"id": 1, "name": "pose", "kappas": [0.5, 0.25]}],
            "annotations": [{"image_id": 1, "category_id": 1,
                             "keypoints": [5, 5, 2, 9, 9, 0], "area": 25}]
        }"#;
        let f = write_temp(text);
        let gt = load_ground_truth(f.path(), Task::Keypoints).unwrap();
        match &gt.instances[0].geometry {
            Geometry::Keypoints(k) => {
                assert_eq!(k.scale(), 5.0);
                assert_eq!(k.points().len(), 2);
                assert!(k.points()[0].visible);
                assert!(!k.points()[1].visible);
            }
            other => panic!("expected keypoints, got {other:?}"),
        }
    }
}

//! COCO-style annotation files for candidate predictions and ground truth.
//!
//! Only polygon segmentations are supported. Predictions may carry a
//! `score`; records without one are read with confidence 1.0. An optional
//! `source` string names the producing model and defaults to the file stem.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, CandidateSegment, CandidateSet, SegmentClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<serde_json::Value>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize)]
struct OutFile<'a> {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: &'a [CocoCategory],
}

/// The 25 segment categories with their conventional ids.
pub fn standard_categories() -> Vec<CocoCategory> {
    SegmentClass::SEGMENTS
        .iter()
        .map(|c| CocoCategory { id: c.category_id().unwrap(), name: c.name().to_string(), supercategory: None })
        .collect()
}

/// Parses an annotation document into one candidate set per listed image.
///
/// Category ids are resolved through the file's own `categories` table by
/// label name; files without a table use the conventional ids.
pub fn parse_candidates(text: &str, default_source: &str) -> Result<Vec<CandidateSet>> {
    let raw: RawFile = serde_json::from_str(text)?;

    let categories: BTreeMap<u64, SegmentClass> = if raw.categories.is_empty() {
        SegmentClass::SEGMENTS.iter().map(|&c| (c.category_id().unwrap(), c)).collect()
    } else {
        raw.categories.iter().map(|c| Ok((c.id, c.name.parse::<SegmentClass>()?))).collect::<Result<_>>()?
    };

    let mut sets: BTreeMap<u64, CandidateSet> = BTreeMap::new();
    for img in &raw.images {
        if img.width == 0 || img.height == 0 {
            return Err(Error::Schema(format!("image {} has zero size", img.id)));
        }
        if sets.insert(img.id, CandidateSet::new(img.id, &img.file_name, img.width, img.height)).is_some() {
            return Err(Error::Schema(format!("duplicate image id {}", img.id)));
        }
    }

    for (index, value) in raw.annotations.into_iter().enumerate() {
        let record = |message: String| Error::Record { index, message };
        let ann: CocoAnnotation = serde_json::from_value(value).map_err(|e| record(e.to_string()))?;
        let class = *categories
            .get(&ann.category_id)
            .ok_or_else(|| record(format!("unknown category id {}", ann.category_id)))?;
        if class.is_background() {
            return Err(record("background annotations are not segments".into()));
        }
        let set = sets.get_mut(&ann.image_id).ok_or_else(|| record(format!("unknown image id {}", ann.image_id)))?;
        let confidence = ann.score.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&confidence) {
            return Err(record(format!("score {confidence} outside [0, 1]")));
        }
        if ann.segmentation.iter().any(|p| p.len() % 2 != 0 || p.iter().any(|v| !v.is_finite())) {
            return Err(record("polygon must hold an even number of finite coordinates".into()));
        }
        let mask = BinaryMask::from_polygons(set.width, set.height, &ann.segmentation);
        if mask.is_empty() {
            log::warn!("record {index}: polygon covers no pixel centres, skipped");
            continue;
        }
        let source = ann.source.unwrap_or_else(|| default_source.to_string());
        set.candidates.push(CandidateSegment::new(class, mask, confidence, source)?);
    }
    Ok(sets.into_values().collect())
}

/// Reads an annotation file, tagging candidates with the file stem as source.
pub fn read_candidates(path: &Path) -> Result<Vec<CandidateSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
    parse_candidates(&text, stem).map_err(|e| match e {
        Error::Record { index, message } => Error::Schema(format!("{}: record {index}: {message}", path.display())),
        Error::Json(j) => Error::Schema(format!("{}: {j}", path.display())),
        other => other,
    })
}

/// Serializes candidate sets; masks are written as rectangle polygons that
/// rasterize back to the same pixels.
pub fn candidates_to_json(sets: &[CandidateSet]) -> Result<String> {
    let mut sorted: Vec<&CandidateSet> = sets.iter().collect();
    sorted.sort_by_key(|s| s.image_id);
    let images = sorted
        .iter()
        .map(|s| CocoImage { id: s.image_id, width: s.width, height: s.height, file_name: s.file_name.clone() })
        .collect();
    let mut annotations = Vec::new();
    for set in &sorted {
        for c in &set.candidates {
            annotations.push(annotation_for(annotations.len() as u64 + 1, set.image_id, c));
        }
    }
    let categories = standard_categories();
    let out = OutFile { images, annotations, categories: &categories };
    Ok(serde_json::to_string_pretty(&out)?)
}

pub fn write_candidates(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    let text = candidates_to_json(sets)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn annotation_for(id: u64, image_id: u64, c: &CandidateSegment) -> CocoAnnotation {
    let (w, h) = (c.mask.width(), c.mask.height());
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if c.mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    CocoAnnotation {
        id,
        image_id,
        category_id: c.class.category_id().expect("candidates never carry background"),
        segmentation: c.mask.to_polygons(),
        area: Some(c.area() as f64),
        bbox: Some([x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64]),
        score: Some(c.confidence),
        source: Some(c.source.clone()),
    }
}

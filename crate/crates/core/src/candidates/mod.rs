//! Candidate segments proposed by external detectors: parsing, area and
//! class filtering, ensemble fusion and mask erosion.

mod class;
pub mod coco;
mod mask;

pub use class::{parse_class_list, SegmentClass};
pub use coco::{candidates_to_json, parse_candidates, read_candidates, write_candidates};
pub use mask::BinaryMask;

use crate::error::{Error, Result};

/// One proposed coronary segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSegment {
    pub class: SegmentClass,
    pub mask: BinaryMask,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
    /// Producing model or filter variant; fused candidates join tags with `+`.
    pub source: String,
}

impl CandidateSegment {
    pub fn new(class: SegmentClass, mask: BinaryMask, confidence: f64, source: impl Into<String>) -> Result<Self> {
        if class.is_background() {
            return Err(Error::InvalidParameter("a candidate cannot be background".into()));
        }
        if mask.is_empty() {
            return Err(Error::InvalidParameter("candidate mask is empty".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidParameter(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { class, mask, confidence, source: source.into() })
    }

    pub fn area(&self) -> usize {
        self.mask.area()
    }
}

/// All candidates proposed for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub image_id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub candidates: Vec<CandidateSegment>,
}

impl CandidateSet {
    pub fn new(image_id: u64, file_name: &str, width: usize, height: usize) -> Self {
        Self { image_id, file_name: file_name.to_string(), width, height, candidates: Vec::new() }
    }

    /// Adds a candidate after checking it lives on this image's grid.
    pub fn push(&mut self, candidate: CandidateSegment) -> Result<()> {
        if candidate.mask.width() != self.width || candidate.mask.height() != self.height {
            return Err(Error::SizeMismatch(format!(
                "mask {}x{} on image {}x{}",
                candidate.mask.width(),
                candidate.mask.height(),
                self.width,
                self.height
            )));
        }
        self.candidates.push(candidate);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn with_candidates(&self, candidates: Vec<CandidateSegment>) -> Self {
        Self { candidates, ..self.clone_header() }
    }

    fn clone_header(&self) -> Self {
        Self {
            image_id: self.image_id,
            file_name: self.file_name.clone(),
            width: self.width,
            height: self.height,
            candidates: Vec::new(),
        }
    }
}

/// Minimum candidate area in pixels.
pub const DEFAULT_MIN_AREA: usize = 450;

/// Same-class IoU at or above which ensemble candidates are fused.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Classes with too few training instances to be predicted reliably.
pub fn default_excluded_classes() -> Vec<SegmentClass> {
    use SegmentClass::*;
    vec![S10, S10a, S14a, S15, S16, S16a, S16b, S16c, S12b]
}

/// Drops candidates whose mask has fewer than `min_area` pixels.
pub fn area_filter(set: &CandidateSet, min_area: usize) -> CandidateSet {
    set.with_candidates(set.candidates.iter().filter(|c| c.area() >= min_area).cloned().collect())
}

/// Drops candidates whose class is in `excluded`.
pub fn class_filter(set: &CandidateSet, excluded: &[SegmentClass]) -> CandidateSet {
    set.with_candidates(set.candidates.iter().filter(|c| !excluded.contains(&c.class)).cloned().collect())
}

/// Bounding box `[x0, x1) × [y0, y1)` and area, cached for pairwise IoU.
struct Extent {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    area: usize,
}

impl Extent {
    fn of(mask: &BinaryMask) -> Self {
        let (mut x0, mut y0, mut x1, mut y1, mut area) = (usize::MAX, usize::MAX, 0, 0, 0);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                    area += 1;
                }
            }
        }
        Self { x0, y0, x1, y1, area }
    }
}

fn bounded_iou(a: &BinaryMask, ea: &Extent, b: &BinaryMask, eb: &Extent) -> f64 {
    let (x0, x1) = (ea.x0.max(eb.x0), ea.x1.min(eb.x1));
    let (y0, y1) = (ea.y0.max(eb.y0), ea.y1.min(eb.y1));
    let mut inter = 0;
    if x0 < x1 && y0 < y1 {
        for y in y0..y1 {
            for x in x0..x1 {
                if a.get(x, y) && b.get(x, y) {
                    inter += 1;
                }
            }
        }
    }
    let union = ea.area + eb.area - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn join_sources(a: &str, b: &str) -> String {
    let mut tags: Vec<&str> = a.split('+').chain(b.split('+')).filter(|s| !s.is_empty()).collect();
    tags.sort_unstable();
    tags.dedup();
    tags.join("+")
}

/// Pools candidates from several detectors run on the same image.
///
/// Same-class candidates whose masks overlap with IoU at or above the
/// threshold are fused (mask union, maximum confidence, joined source tags)
/// until no such pair remains. Overlapping candidates of different classes
/// are all kept for the anatomy validator to settle.
pub fn merge_ensemble(sets: &[CandidateSet], iou_threshold: f64) -> Result<CandidateSet> {
    let first = sets.first().ok_or_else(|| Error::InvalidParameter("no candidate sets to merge".into()))?;
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("IoU threshold {iou_threshold} outside (0, 1]")));
    }
    for s in &sets[1..] {
        if s.width != first.width || s.height != first.height {
            return Err(Error::SizeMismatch(format!(
                "image {}: {}x{} vs {}x{}",
                s.image_id, s.width, s.height, first.width, first.height
            )));
        }
        if s.image_id != first.image_id {
            return Err(Error::ImageIdMismatch(format!("{} vs {}", s.image_id, first.image_id)));
        }
    }

    let mut pool: Vec<(CandidateSegment, Extent)> = sets
        .iter()
        .flat_map(|s| s.candidates.iter().cloned())
        .map(|c| {
            let e = Extent::of(&c.mask);
            (c, e)
        })
        .collect();

    'fuse: loop {
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                let (a, ea) = &pool[i];
                let (b, eb) = &pool[j];
                if a.class != b.class || bounded_iou(&a.mask, ea, &b.mask, eb) < iou_threshold {
                    continue;
                }
                let (b, _) = pool.remove(j);
                let a = &mut pool[i].0;
                a.mask.union_in_place(&b.mask);
                a.confidence = a.confidence.max(b.confidence);
                a.source = join_sources(&a.source, &b.source);
                pool[i].1 = Extent::of(&pool[i].0.mask);
                continue 'fuse;
            }
        }
        break;
    }

    Ok(first.with_candidates(pool.into_iter().map(|(c, _)| c).collect()))
}

/// Applies `iterations` rounds of 3×3-cross erosion, stopping at the last
/// non-empty stage.
pub fn erode_mask(candidate: &CandidateSegment, iterations: usize) -> CandidateSegment {
    let mut mask = candidate.mask.clone();
    for _ in 0..iterations {
        let next = mask.erode_cross();
        if next.is_empty() {
            break;
        }
        mask = next;
    }
    CandidateSegment { mask, ..candidate.clone() }
}

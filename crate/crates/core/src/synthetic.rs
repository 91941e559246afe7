//! Seeded generators for test images and simulated detector output.
//!
//! Vessel trees are drawn as thick polylines grown outward from a root, one
//! segment per class, so the geometry follows the anatomy graph. Detector
//! output is simulated by jittering the ground truth and injecting false
//! positives of the kinds the anatomy validator is meant to catch.

use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::{BinaryMask, CandidateSegment, CandidateSet, SegmentClass};
use crate::image_core::GrayImage;
use crate::scalar::Scalar;
use crate::tree_logic::{resolve_confusables, validate_tree, AncestryMode, AnatomyGraph, Side};

/// Length of one drawn segment in pixels.
pub const SEGMENT_LENGTH: f64 = 70.0;
/// Stroke width of drawn segments in pixels.
pub const SEGMENT_THICKNESS: f64 = 9.0;

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).hypot(p.1 - qy)
}

/// Pixels whose centres lie within `thickness / 2` of the polyline.
pub fn thick_polyline(width: usize, height: usize, points: &[(f64, f64)], thickness: f64) -> BinaryMask {
    let half = thickness / 2.0;
    let mut mask = BinaryMask::empty(width, height);
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = (a.0.min(b.0) - half).floor().max(0.0) as usize;
        let y0 = (a.1.min(b.1) - half).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + half).ceil().max(0.0) as usize).min(width);
        let y1 = ((a.1.max(b.1) + half).ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if point_segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b) <= half {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

/// Dark curvilinear ridge of the given half-width on a bright background.
pub fn vessel_phantom<T: Scalar>(width: usize, height: usize, half_width: f64) -> GrayImage<T> {
    let (w, h) = (width as f64, height as f64);
    GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let centre = h / 2.0 + h / 6.0 * (2.0 * PI * xf / w).sin();
        let d = (yf - centre).abs();
        let shade = 190.0 + 10.0 * (xf / w);
        T::lit(if d <= half_width { 70.0 + 2.0 * d } else { shade })
    })
    .expect("phantom samples are finite")
}

/// Sinusoidal grating whose wave vector has integer frequency `(u, v)`.
pub fn stripe_image<T: Scalar>(width: usize, height: usize, u: isize, v: isize) -> GrayImage<T> {
    GrayImage::from_fn(width, height, |x, y| {
        let phase = 2.0 * PI * (u as f64 * x as f64 / width as f64 + v as f64 * y as f64 / height as f64);
        T::lit(128.0 + 100.0 * phase.cos())
    })
    .expect("stripe samples are finite")
}

/// Centreline of a drawn segment and the direction it leaves in.
#[derive(Debug, Clone)]
struct Stroke {
    points: Vec<(f64, f64)>,
    heading: f64,
}

fn grow_stroke<R: Rng>(rng: &mut R, start: (f64, f64), heading: f64, size: usize) -> Stroke {
    let margin = SEGMENT_THICKNESS;
    let lim = size as f64 - margin;
    let clamp = |p: (f64, f64)| (p.0.clamp(margin, lim), p.1.clamp(margin, lim));
    let bend = rng.random_range(-0.25..0.25);
    let half = SEGMENT_LENGTH / 2.0;
    let mid = clamp((start.0 + half * heading.cos(), start.1 + half * heading.sin()));
    let out = heading + bend;
    let end = clamp((mid.0 + half * out.cos(), mid.1 + half * out.sin()));
    Stroke { points: vec![start, mid, end], heading: out }
}

/// Draws every class of the tree rooted at `root` on a `size`×`size` grid.
fn draw_full_tree<R: Rng>(rng: &mut R, graph: &AnatomyGraph, root: SegmentClass, size: usize) -> Vec<(SegmentClass, Stroke)> {
    let s = size as f64;
    let start = (s * rng.random_range(0.35..0.65), s * 0.08);
    let heading = PI / 2.0 + rng.random_range(-0.3..0.3);
    let mut strokes: Vec<(SegmentClass, Stroke)> = vec![(root, grow_stroke(rng, start, heading, size))];
    let mut i = 0;
    while i < strokes.len() {
        let (class, parent) = (strokes[i].0, strokes[i].1.clone());
        let children = graph.children(class);
        let k = children.len();
        for (j, &child) in children.iter().enumerate() {
            let spread = if k == 1 { 0.0 } else { -0.7 + 1.4 * j as f64 / (k - 1) as f64 };
            let heading = parent.heading + spread + rng.random_range(-0.15..0.15);
            let from = *parent.points.last().unwrap();
            strokes.push((child, grow_stroke(rng, from, heading, size)));
        }
        i += 1;
    }
    strokes
}

/// Ancestrally closed random subset of the tree under `root` with at least
/// `min_size` classes.
fn random_subtree<R: Rng>(rng: &mut R, graph: &AnatomyGraph, root: SegmentClass, min_size: usize) -> Vec<SegmentClass> {
    loop {
        let mut chosen = vec![root];
        let mut i = 0;
        while i < chosen.len() {
            for &c in graph.children(chosen[i]) {
                if rng.random_bool(0.7) {
                    chosen.push(c);
                }
            }
            i += 1;
        }
        if chosen.len() >= min_size {
            return chosen;
        }
    }
}

/// One simulated image: ground truth plus one candidate set per detector.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub ground_truth: CandidateSet,
    pub detections: Vec<CandidateSet>,
}

fn root_for(graph: &AnatomyGraph, side: Side) -> SegmentClass {
    *graph.roots().iter().find(|&&r| graph.side(r) == Some(side)).expect("graph has a root per side")
}

fn shifted(mask: &BinaryMask, dx: isize, dy: isize) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (sx, sy) = (x as isize - dx, y as isize - dy);
        sx >= 0 && sy >= 0 && sx < w && sy < h && mask.get(sx as usize, sy as usize)
    })
}

/// A stroke of one segment length placed at a random spot whose mask stays
/// more than `clearance` pixels from every mask in `avoid`.
fn stray_stroke<R: Rng>(rng: &mut R, size: usize, avoid: &[&BinaryMask], clearance: f64) -> Option<BinaryMask> {
    for _ in 0..200 {
        let s = size as f64;
        let start = (rng.random_range(0.1 * s..0.9 * s), rng.random_range(0.1 * s..0.9 * s));
        let heading = rng.random_range(0.0..2.0 * PI);
        let stroke = grow_stroke(rng, start, heading, size);
        let mask = thick_polyline(size, size, &stroke.points, SEGMENT_THICKNESS);
        if avoid.iter().all(|m| m.distance_to(&mask).is_none_or(|d| d > clearance)) {
            return Some(mask);
        }
    }
    None
}

/// Builds one simulated case.
///
/// Ground truth is an ancestrally closed tree of one circulation whose
/// confusable families are already in proximal-to-distal order. Each of the
/// two detectors reports every ground-truth segment shifted by at most one
/// pixel. False positives are then added: segments of the opposite
/// circulation, a low-confidence duplicate of a ground-truth class, and a
/// segment whose ancestors are all missing, drawn far from the tree.
pub fn synthetic_case<R: Rng>(rng: &mut R, graph: &AnatomyGraph, image_id: u64, size: usize) -> SyntheticCase {
    let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
    let root = root_for(graph, side);
    let excluded = crate::candidates::default_excluded_classes();

    let gt = loop {
        let strokes = draw_full_tree(rng, graph, root, size);
        let classes = random_subtree(rng, graph, root, 4);
        let mut gt = CandidateSet::new(image_id, &format!("synthetic_{image_id:03}.png"), size, size);
        for (class, stroke) in &strokes {
            if classes.contains(class) {
                let mask = thick_polyline(size, size, &stroke.points, SEGMENT_THICKNESS);
                gt.candidates.push(CandidateSegment::new(*class, mask, 1.0, "gt").expect("confidence in range"));
            }
        }
        let report = resolve_confusables(&validate_tree(&gt, graph, AncestryMode::Strict), graph);
        if report.removed.is_empty() && report.relabels.is_empty() {
            break gt;
        }
    };

    let sources = ["det_a", "det_b"];
    let mut detections: Vec<CandidateSet> = sources
        .iter()
        .map(|&src| {
            let mut set = gt.with_candidates(Vec::new());
            for c in &gt.candidates {
                let (dx, dy) = (rng.random_range(-1i32..=1), rng.random_range(-1i32..=1));
                let mask = shifted(&c.mask, dx as isize, dy as isize);
                let conf = rng.random_range(0.6..0.95);
                set.candidates.push(CandidateSegment::new(c.class, mask, conf, src).expect("confidence in range"));
            }
            set
        })
        .collect();

    let gt_masks: Vec<&BinaryMask> = gt.candidates.iter().map(|c| &c.mask).collect();
    let mut fps: Vec<CandidateSegment> = Vec::new();

    let other_side = if side == Side::Left { Side::Right } else { Side::Left };
    let foreign: Vec<SegmentClass> = SegmentClass::SEGMENTS
        .iter()
        .copied()
        .filter(|&c| graph.side(c) == Some(other_side) && !excluded.contains(&c))
        .collect();
    for _ in 0..rng.random_range(1..=2) {
        let class = *foreign.choose(rng).unwrap();
        if let Some(mask) = stray_stroke(rng, size, &[], 0.0) {
            fps.push(CandidateSegment::new(class, mask, rng.random_range(0.3..0.5), "").unwrap());
        }
    }

    let non_root: Vec<SegmentClass> = gt.candidates.iter().map(|c| c.class).filter(|&c| c != root).collect();
    if let Some(&class) = non_root.choose(rng) {
        let own = gt.candidates.iter().find(|c| c.class == class).map(|c| &c.mask).unwrap();
        if let Some(mask) = stray_stroke(rng, size, &[own], SEGMENT_THICKNESS) {
            fps.push(CandidateSegment::new(class, mask, rng.random_range(0.2..0.4), "").unwrap());
        }
    }

    let present: Vec<SegmentClass> = gt.candidates.iter().map(|c| c.class).collect();
    let orphans: Vec<SegmentClass> = SegmentClass::SEGMENTS
        .iter()
        .copied()
        .filter(|&c| graph.side(c) == Some(side) && !present.contains(&c) && !excluded.contains(&c))
        .filter(|&c| graph.parent(c).is_some_and(|p| !present.contains(&p)))
        .collect();
    if let Some(&class) = orphans.choose(rng) {
        if let Some(mask) = stray_stroke(rng, size, &gt_masks, 60.0) {
            fps.push(CandidateSegment::new(class, mask, rng.random_range(0.5..0.8), "").unwrap());
        }
    }

    for mut fp in fps {
        let k = rng.random_range(0..detections.len());
        fp.source = sources[k].to_string();
        detections[k].candidates.push(fp);
    }
    for d in &mut detections {
        d.candidates.shuffle(rng);
    }
    SyntheticCase { ground_truth: gt, detections }
}

/// Deterministic corpus of `count` simulated cases on `size`×`size` grids.
pub fn ablation_corpus(seed: u64, count: usize, size: usize, graph: &AnatomyGraph) -> Vec<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=count as u64).map(|id| synthetic_case(&mut rng, graph, id, size)).collect()
}

/// Unstructured candidate set for property tests: random classes from both
/// circulations with random rectangles, confidences and duplicates.
pub fn random_candidate_set<R: Rng>(rng: &mut R, image_id: u64, size: usize) -> CandidateSet {
    let mut set = CandidateSet::new(image_id, "", size, size);
    for _ in 0..rng.random_range(1..=14) {
        let class = *SegmentClass::SEGMENTS.choose(rng).unwrap();
        let (x0, y0) = (rng.random_range(0..size - 4), rng.random_range(0..size - 4));
        let (x1, y1) = (rng.random_range(x0 + 1..=size.min(x0 + 40)), rng.random_range(y0 + 1..=size.min(y0 + 40)));
        let conf = (rng.random_range(1..=20) as f64) / 20.0;
        set.candidates.push(CandidateSegment::new(class, BinaryMask::rect(size, size, x0, y0, x1, y1), conf, "r").unwrap());
    }
    set
}

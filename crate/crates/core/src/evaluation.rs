//! Pixel-level F1 scoring of candidate sets against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidates::{BinaryMask, CandidateSet, SegmentClass};
use crate::error::{Error, Result};

/// Confusion counts for one class on one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub f1: f64,
}

impl ClassScore {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 };
        Self { tp, fp, fn_, f1 }
    }

    /// True when neither side has any pixel of the class.
    pub fn is_vacuous(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

pub type ImageScores = BTreeMap<SegmentClass, ClassScore>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: BTreeMap<u64, ImageScores>,
    /// Per-class F1 from counts pooled over all images.
    pub per_class: BTreeMap<SegmentClass, ClassScore>,
    /// Mean of per-image, per-present-class F1 values.
    pub mean_f1: f64,
    /// Mean of the pooled per-class F1 values.
    pub micro_mean_f1: f64,
}

impl EvalReport {
    pub fn per_class_f1(&self) -> BTreeMap<SegmentClass, f64> {
        self.per_class.iter().map(|(&c, s)| (c, s.f1)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table with one row per class plus macro and micro rows.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>10} {:>8}", "class", "tp", "fp", "fn", "f1");
        for (class, s) in &self.per_class {
            let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>10} {:>8.4}", class.name(), s.tp, s.fp, s.fn_, s.f1);
        }
        let _ = writeln!(out, "{:<10} {:>41.4}", "macro", self.mean_f1);
        let _ = writeln!(out, "{:<10} {:>41.4}", "micro", self.micro_mean_f1);
        out
    }
}

fn class_union(set: &CandidateSet, class: SegmentClass) -> BinaryMask {
    let mut m = BinaryMask::empty(set.width, set.height);
    for c in set.candidates.iter().filter(|c| c.class == class) {
        m.union_in_place(&c.mask);
    }
    m
}

/// Scores one image. Only classes present in either set appear in the result.
pub fn f1_image(pred: &CandidateSet, gt: &CandidateSet) -> Result<ImageScores> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::SizeMismatch(format!(
            "image {}: prediction grid {}x{} vs ground truth {}x{}",
            gt.image_id, pred.width, pred.height, gt.width, gt.height
        )));
    }
    let classes: BTreeSet<SegmentClass> = pred.candidates.iter().chain(&gt.candidates).map(|c| c.class).collect();
    let mut out = BTreeMap::new();
    for class in classes {
        let (p, g) = (class_union(pred, class), class_union(gt, class));
        let tp = p.intersection_area(&g) as u64;
        let score = ClassScore::from_counts(tp, p.area() as u64 - tp, g.area() as u64 - tp);
        if !score.is_vacuous() {
            out.insert(class, score);
        }
    }
    Ok(out)
}

/// Combines per-image scores into micro and macro aggregates.
pub fn aggregate(per_image: BTreeMap<u64, ImageScores>) -> EvalReport {
    let mut pooled: BTreeMap<SegmentClass, (u64, u64, u64)> = BTreeMap::new();
    let mut macro_values = Vec::new();
    for scores in per_image.values() {
        for (&class, s) in scores.iter().filter(|(_, s)| !s.is_vacuous()) {
            let e = pooled.entry(class).or_default();
            e.0 += s.tp;
            e.1 += s.fp;
            e.2 += s.fn_;
            macro_values.push(s.f1);
        }
    }
    let per_class: BTreeMap<_, _> =
        pooled.into_iter().map(|(c, (tp, fp, fn_))| (c, ClassScore::from_counts(tp, fp, fn_))).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let micro: Vec<f64> = per_class.values().map(|s| s.f1).collect();
    EvalReport { mean_f1: mean(&macro_values), micro_mean_f1: mean(&micro), per_class, per_image }
}

/// Scores prediction sets against ground truth matched by image id.
pub fn evaluate(predictions: &[CandidateSet], ground_truth: &[CandidateSet]) -> Result<EvalReport> {
    let pred: BTreeMap<u64, &CandidateSet> = predictions.iter().map(|s| (s.image_id, s)).collect();
    let gt: BTreeMap<u64, &CandidateSet> = ground_truth.iter().map(|s| (s.image_id, s)).collect();
    let only_pred: Vec<u64> = pred.keys().filter(|k| !gt.contains_key(k)).copied().collect();
    let only_gt: Vec<u64> = gt.keys().filter(|k| !pred.contains_key(k)).copied().collect();
    if !only_pred.is_empty() || !only_gt.is_empty() {
        return Err(Error::ImageIdMismatch(format!(
            "only in predictions: {only_pred:?}; only in ground truth: {only_gt:?}"
        )));
    }
    let mut per_image = BTreeMap::new();
    for (id, g) in gt {
        per_image.insert(id, f1_image(pred[&id], g)?);
    }
    Ok(aggregate(per_image))
}

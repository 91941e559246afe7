//! Anatomy-driven validation of candidate segments.
//!
//! The coronary tree is a forest of segment classes rooted next to the
//! aorta: segment 1 for the right circulation and segment 5 for the left.
//! Validation first commits an image to one circulation, then walks the
//! chosen tree from its root outward keeping only candidates whose
//! ancestry is supported, and finally reorders labels inside families of
//! sibling segments that detectors commonly confuse.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSegment, CandidateSet, SegmentClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Rooted parent/child structure over segment classes with a laterality map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnatomyGraph {
    roots: Vec<SegmentClass>,
    parent: BTreeMap<SegmentClass, SegmentClass>,
    children: BTreeMap<SegmentClass, Vec<SegmentClass>>,
    laterality: BTreeMap<SegmentClass, Side>,
}

/// On-disk form of an anatomy graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphConfig {
    pub roots: Vec<SegmentClass>,
    pub edges: Vec<(SegmentClass, SegmentClass)>,
    pub laterality: LateralityConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LateralityConfig {
    pub left: Vec<SegmentClass>,
    pub right: Vec<SegmentClass>,
}

/// Text of the bundled default graph file.
pub const DEFAULT_GRAPH_TOML: &str = include_str!("../data/syntax_graph.toml");

impl AnatomyGraph {
    /// Builds and validates a graph: it must be a forest over all 25 segment
    /// classes, every non-root vertex must have one parent, the laterality
    /// map must be total and disjoint, and no edge may cross circulations.
    pub fn new(config: &GraphConfig) -> Result<Self> {
        let all: BTreeSet<SegmentClass> = SegmentClass::SEGMENTS.iter().copied().collect();
        let bad = |msg: String| Err(Error::Graph(msg));

        let mut laterality = BTreeMap::new();
        for (side, list) in [(Side::Left, &config.laterality.left), (Side::Right, &config.laterality.right)] {
            for &c in list {
                if c.is_background() {
                    return bad("background cannot carry laterality".into());
                }
                if let Some(prev) = laterality.insert(c, side) {
                    return bad(format!("segment {c} listed as both {prev:?} and {side:?}"));
                }
            }
        }
        if let Some(missing) = all.iter().find(|c| !laterality.contains_key(c)) {
            return bad(format!("segment {missing} has no laterality"));
        }

        if config.roots.is_empty() {
            return bad("no roots".into());
        }
        let roots_set: BTreeSet<SegmentClass> = config.roots.iter().copied().collect();
        if roots_set.len() != config.roots.len() {
            return bad("duplicate root".into());
        }

        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<SegmentClass, Vec<SegmentClass>> = BTreeMap::new();
        for &(p, c) in &config.edges {
            if p.is_background() || c.is_background() {
                return bad("background cannot be a vertex".into());
            }
            if roots_set.contains(&c) {
                return bad(format!("root {c} has a parent ({p})"));
            }
            if let Some(prev) = parent.insert(c, p) {
                return bad(format!("segment {c} has two parents ({prev} and {p})"));
            }
            if laterality[&p] != laterality[&c] {
                return bad(format!("edge {p} -> {c} crosses circulations"));
            }
            children.entry(p).or_default().push(c);
        }

        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<SegmentClass> = config.roots.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if !seen.insert(v) {
                return bad(format!("cycle through {v}"));
            }
            queue.extend(children.get(&v).into_iter().flatten().copied());
        }
        if let Some(missing) = all.iter().find(|c| !seen.contains(c)) {
            return bad(format!("segment {missing} is not reachable from any root"));
        }

        Ok(Self { roots: config.roots.clone(), parent, children, laterality })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: GraphConfig = toml::from_str(text).map_err(|e| Error::Graph(e.to_string()))?;
        Self::new(&cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_config(&self) -> GraphConfig {
        let side = |s: Side| self.laterality.iter().filter(|(_, &v)| v == s).map(|(&c, _)| c).collect();
        let mut edges = Vec::new();
        for root in &self.roots {
            for v in self.bfs_from(*root) {
                for &c in self.children(v) {
                    edges.push((v, c));
                }
            }
        }
        GraphConfig {
            roots: self.roots.clone(),
            edges,
            laterality: LateralityConfig { left: side(Side::Left), right: side(Side::Right) },
        }
    }

    pub fn roots(&self) -> &[SegmentClass] {
        &self.roots
    }

    pub fn parent(&self, class: SegmentClass) -> Option<SegmentClass> {
        self.parent.get(&class).copied()
    }

    pub fn children(&self, class: SegmentClass) -> &[SegmentClass] {
        self.children.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn side(&self, class: SegmentClass) -> Option<Side> {
        self.laterality.get(&class).copied()
    }

    /// Ancestors from the parent up to the root.
    pub fn ancestors(&self, class: SegmentClass) -> Vec<SegmentClass> {
        let mut out = Vec::new();
        let mut cur = class;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Vertices of the subtree under `root` in breadth-first order.
    pub fn bfs_from(&self, root: SegmentClass) -> Vec<SegmentClass> {
        let mut order = Vec::new();
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.children(v).iter().copied());
        }
        order
    }

    pub fn vertex_count(&self) -> usize {
        self.laterality.len()
    }
}

/// Standard coronary segment hierarchy.
pub fn default_anatomy_graph() -> AnatomyGraph {
    use SegmentClass::*;
    let edges = vec![
        (S1, S2),
        (S2, S3),
        (S3, S4),
        (S4, S16),
        (S16, S16a),
        (S16, S16b),
        (S16, S16c),
        (S5, S6),
        (S5, S11),
        (S5, S12),
        (S6, S7),
        (S6, S9),
        (S7, S8),
        (S7, S10),
        (S9, S9a),
        (S10, S10a),
        (S11, S13),
        (S12, S12a),
        (S12, S12b),
        (S13, S14),
        (S13, S15),
        (S14, S14a),
        (S14, S14b),
    ];
    let right = vec![S1, S2, S3, S4, S16, S16a, S16b, S16c];
    let left = SegmentClass::SEGMENTS.iter().copied().filter(|c| !right.contains(c)).collect();
    AnatomyGraph::new(&GraphConfig { roots: vec![S1, S5], edges, laterality: LateralityConfig { left, right } })
        .expect("default anatomy graph is valid")
}

/// How strictly a candidate's ancestry must be supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AncestryMode {
    /// Every ancestor on the path to the root must be kept.
    Strict,
    /// Missing intermediate ancestors are tolerated when the candidate mask
    /// lies within `max_distance` pixels of its nearest kept ancestor's mask.
    Bridging { max_distance: f64 },
}

impl Default for AncestryMode {
    fn default() -> Self {
        AncestryMode::Bridging { max_distance: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    LateralityConflict,
    OrphanPath,
    DuplicateClass,
    Relabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub kept: Vec<CandidateSegment>,
    pub removed: Vec<(CandidateSegment, Reason)>,
    /// `None` only for an empty candidate set.
    pub laterality: Option<Side>,
    /// `(old, new)` label pairs applied to kept candidates.
    pub relabels: Vec<(SegmentClass, SegmentClass)>,
}

/// Picks the circulation carrying the larger `confidence × area` weight.
///
/// Ties go to the side holding the single most confident candidate, then to
/// the left.
pub fn classify_laterality(set: &CandidateSet, graph: &AnatomyGraph) -> Result<Side> {
    laterality_of(&set.candidates, graph)
}

fn laterality_of(candidates: &[CandidateSegment], graph: &AnatomyGraph) -> Result<Side> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("cannot classify laterality of an empty set".into()));
    }
    let mut weight = BTreeMap::from([(Side::Left, 0.0), (Side::Right, 0.0)]);
    let mut best = BTreeMap::from([(Side::Left, f64::NEG_INFINITY), (Side::Right, f64::NEG_INFINITY)]);
    for c in candidates {
        let Some(side) = graph.side(c.class) else { continue };
        *weight.get_mut(&side).unwrap() += c.confidence * c.area() as f64;
        let b = best.get_mut(&side).unwrap();
        *b = b.max(c.confidence);
    }
    let (l, r) = (weight[&Side::Left], weight[&Side::Right]);
    Ok(match l.partial_cmp(&r) {
        Some(Ordering::Greater) => Side::Left,
        Some(Ordering::Less) => Side::Right,
        _ if best[&Side::Right] > best[&Side::Left] => Side::Right,
        _ => Side::Left,
    })
}

/// Ordering used to pick one candidate among several of the same class.
fn duplicate_rank(a: &CandidateSegment, b: &CandidateSegment) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| b.area().cmp(&a.area()))
        .then_with(|| a.source.cmp(&b.source))
}

/// Validates a candidate set against the anatomy graph.
///
/// 1. Candidates from the circulation opposite to [`classify_laterality`]
///    are removed.
/// 2. Where several candidates share a class, the most confident is kept
///    (then the larger, then the lexicographically first source).
/// 3. The chosen tree is walked breadth-first from its root; a candidate is
///    kept when its parent class is kept, or, in bridging mode, when it lies
///    close enough to its nearest kept ancestor.
///
/// `kept` preserves input order.
pub fn validate_tree(set: &CandidateSet, graph: &AnatomyGraph, mode: AncestryMode) -> ValidationReport {
    let n = set.candidates.len();
    let mut verdict: Vec<Option<Reason>> = vec![None; n];

    let laterality = laterality_of(&set.candidates, graph).ok();
    let Some(side) = laterality else {
        return ValidationReport { kept: Vec::new(), removed: Vec::new(), laterality: None, relabels: Vec::new() };
    };

    for (i, c) in set.candidates.iter().enumerate() {
        if graph.side(c.class) != Some(side) {
            verdict[i] = Some(Reason::LateralityConflict);
        }
    }

    // one representative per class
    let mut by_class: BTreeMap<SegmentClass, usize> = BTreeMap::new();
    for (i, c) in set.candidates.iter().enumerate() {
        if verdict[i].is_some() {
            continue;
        }
        match by_class.get(&c.class) {
            Some(&j) if duplicate_rank(&set.candidates[j], c).is_le() => verdict[i] = Some(Reason::DuplicateClass),
            Some(&j) => {
                verdict[j] = Some(Reason::DuplicateClass);
                by_class.insert(c.class, i);
            }
            None => {
                by_class.insert(c.class, i);
            }
        }
    }

    let mut kept_classes: BTreeMap<SegmentClass, usize> = BTreeMap::new();
    let roots: Vec<SegmentClass> = graph.roots().iter().copied().filter(|&r| graph.side(r) == Some(side)).collect();
    for root in roots {
        for class in graph.bfs_from(root) {
            let Some(&i) = by_class.get(&class) else { continue };
            let supported = match graph.parent(class) {
                None => true,
                Some(p) if kept_classes.contains_key(&p) => true,
                Some(_) => match mode {
                    AncestryMode::Strict => false,
                    AncestryMode::Bridging { max_distance } => graph
                        .ancestors(class)
                        .into_iter()
                        .find_map(|a| kept_classes.get(&a))
                        .and_then(|&j| set.candidates[i].mask.distance_to(&set.candidates[j].mask))
                        .is_some_and(|d| d <= max_distance),
                },
            };
            if supported {
                kept_classes.insert(class, i);
            } else {
                verdict[i] = Some(Reason::OrphanPath);
            }
        }
    }
    // classes of the chosen side that no root reaches
    for (&class, &i) in &by_class {
        if !kept_classes.contains_key(&class) && verdict[i].is_none() {
            verdict[i] = Some(Reason::OrphanPath);
        }
    }

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (c, v) in set.candidates.iter().zip(verdict) {
        match v {
            None => kept.push(c.clone()),
            Some(r) => removed.push((c.clone(), r)),
        }
    }
    ValidationReport { kept, removed, laterality: Some(side), relabels: Vec::new() }
}

/// Sibling families whose members are often confused, listed proximal to distal.
pub fn confusable_families() -> Vec<Vec<SegmentClass>> {
    use SegmentClass::*;
    vec![vec![S9, S9a, S10, S10a], vec![S16, S16a, S16b, S16c], vec![S12, S12a, S12b], vec![S14, S14a, S14b]]
}

/// Re-sorts labels within each confusable family.
///
/// Present members are ordered by the Euclidean distance of their mask
/// centroid from the centroid of the family's anchor (the parent of the
/// family's most proximal label), and the family's present labels are
/// reassigned in proximal-to-distal order. Families without a kept anchor
/// are left alone.
pub fn resolve_confusables(report: &ValidationReport, graph: &AnatomyGraph) -> ValidationReport {
    let mut out = report.clone();
    for family in confusable_families() {
        let Some(anchor_class) = graph.parent(family[0]) else { continue };
        let Some(anchor) = out.kept.iter().find(|c| c.class == anchor_class) else { continue };
        let Some((ax, ay)) = anchor.mask.centroid() else { continue };

        let rank = |c: SegmentClass| family.iter().position(|&f| f == c);
        let mut members: Vec<(usize, f64, usize)> = out
            .kept
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                let r = rank(c.class)?;
                let (cx, cy) = c.mask.centroid()?;
                Some((i, (cx - ax).hypot(cy - ay), r))
            })
            .collect();
        if members.len() < 2 {
            continue;
        }
        let mut labels: Vec<usize> = members.iter().map(|m| m.2).collect();
        labels.sort_unstable();
        members.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
        for ((i, _, old), new) in members.into_iter().zip(labels) {
            if old != new {
                out.relabels.push((family[old], family[new]));
                out.kept[i].class = family[new];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::BinaryMask;
    use SegmentClass::*;

    const W: usize = 128;

    fn cand(class: SegmentClass, x0: usize, y0: usize, x1: usize, y1: usize, conf: f64) -> CandidateSegment {
        CandidateSegment::new(class, BinaryMask::rect(W, W, x0, y0, x1, y1), conf, "m").unwrap()
    }

    fn set_of(c: Vec<CandidateSegment>) -> CandidateSet {
        let mut s = CandidateSet::new(1, "", W, W);
        s.candidates = c;
        s
    }

    #[test]
    fn default_graph_shape() {
        let g = default_anatomy_graph();
        assert_eq!(g.parent(S6), Some(S5));
        assert_eq!(g.children(S5), &[S6, S11, S12]);
        assert_eq!(g.roots(), &[S1, S5]);
        assert_eq!(g.vertex_count(), 25);
        for c in SegmentClass::SEGMENTS {
            let top = g.ancestors(c).last().copied().unwrap_or(c);
            assert!(g.roots().contains(&top));
        }
        assert_eq!(g.side(S16b), Some(Side::Right));
        assert_eq!(g.side(S15), Some(Side::Left));
    }

    #[test]
    fn bundled_graph_file_matches_default() {
        assert_eq!(AnatomyGraph::from_toml_str(DEFAULT_GRAPH_TOML).unwrap(), default_anatomy_graph());
        let text = toml::to_string(&default_anatomy_graph().to_config()).unwrap();
        assert_eq!(AnatomyGraph::from_toml_str(&text).unwrap(), default_anatomy_graph());
    }

    #[test]
    fn invalid_graphs_are_rejected() {
        let base = default_anatomy_graph().to_config();

        let mut two_parents = base.clone();
        two_parents.edges.push((S8, S9a));
        assert!(AnatomyGraph::new(&two_parents).is_err());

        let mut overlap = base.clone();
        overlap.laterality.right.push(S5);
        assert!(AnatomyGraph::new(&overlap).is_err());

        let mut partial = base.clone();
        partial.laterality.left.retain(|&c| c != S15);
        assert!(AnatomyGraph::new(&partial).is_err());

        let mut unreachable = base.clone();
        unreachable.edges.retain(|&(_, c)| c != S13);
        assert!(AnatomyGraph::new(&unreachable).is_err());

        let mut cyclic = base.clone();
        cyclic.edges.retain(|&(_, c)| c != S7);
        cyclic.edges.push((S8, S7));
        assert!(AnatomyGraph::new(&cyclic).is_err());

        assert!(AnatomyGraph::from_toml_str("roots = [\"1\"]").is_err());
    }

    #[test]
    fn laterality_by_weight() {
        let g = default_anatomy_graph();
        let s = set_of(vec![cand(S1, 0, 0, 10, 10, 0.9), cand(S2, 0, 20, 10, 30, 0.9), cand(S3, 0, 40, 10, 50, 0.9)]);
        assert_eq!(classify_laterality(&s, &g).unwrap(), Side::Right);

        // 0.9 * 2000 = 1800 vs 0.95 * 500 = 475
        let s = set_of(vec![cand(S5, 0, 0, 40, 50, 0.9), cand(S1, 60, 0, 85, 20, 0.95)]);
        assert_eq!(classify_laterality(&s, &g).unwrap(), Side::Left);

        let s = set_of(vec![cand(S5, 0, 0, 10, 10, 0.5), cand(S1, 20, 0, 30, 10, 0.5)]);
        assert_eq!(classify_laterality(&s, &g).unwrap(), Side::Left);
        assert!(classify_laterality(&set_of(vec![]), &g).is_err());
    }

    #[test]
    fn left_tree_drops_intruding_right_segment() {
        let g = default_anatomy_graph();
        let s = set_of(vec![cand(S5, 40, 0, 50, 30, 0.9), cand(S6, 40, 30, 50, 70, 0.85), cand(S1, 90, 0, 100, 20, 0.6)]);
        let r = validate_tree(&s, &g, AncestryMode::default());
        assert_eq!(r.kept.iter().map(|c| c.class).collect::<Vec<_>>(), vec![S5, S6]);
        assert_eq!(r.removed.len(), 1);
        assert_eq!((r.removed[0].0.class, r.removed[0].1), (S1, Reason::LateralityConflict));
        assert_eq!(r.laterality, Some(Side::Left));
    }

    #[test]
    fn consistent_right_chain_is_untouched() {
        let g = default_anatomy_graph();
        let s = set_of(vec![cand(S1, 0, 0, 10, 20, 0.9), cand(S2, 0, 20, 10, 40, 0.9), cand(S3, 0, 40, 10, 60, 0.9)]);
        let r = validate_tree(&s, &g, AncestryMode::Strict);
        assert_eq!(r.kept, s.candidates);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn strict_mode_orphans_a_gap() {
        let g = default_anatomy_graph();
        let s = set_of(vec![cand(S5, 40, 0, 50, 30, 0.9), cand(S7, 40, 40, 50, 70, 0.9)]);
        let r = validate_tree(&s, &g, AncestryMode::Strict);
        assert_eq!(r.kept.len(), 1);
        assert_eq!((r.removed[0].0.class, r.removed[0].1), (S7, Reason::OrphanPath));

        // the same gap is bridged when the masks are close
        let r = validate_tree(&s, &g, AncestryMode::Bridging { max_distance: 15.0 });
        assert_eq!(r.kept.len(), 2);
        let r = validate_tree(&s, &g, AncestryMode::Bridging { max_distance: 5.0 });
        assert_eq!(r.kept.len(), 1);
    }

    #[test]
    fn duplicates_keep_most_confident() {
        let g = default_anatomy_graph();
        let s = set_of(vec![cand(S5, 40, 0, 50, 30, 0.7), cand(S5, 40, 0, 52, 30, 0.9), cand(S5, 0, 0, 60, 60, 0.9)]);
        let r = validate_tree(&s, &g, AncestryMode::Strict);
        assert_eq!(r.kept.len(), 1);
        assert_eq!(r.kept[0].area(), 3600);
        assert!(r.removed.iter().all(|(_, why)| *why == Reason::DuplicateClass));
    }

    #[test]
    fn confusables_swap_by_distance() {
        let g = default_anatomy_graph();
        let s = set_of(vec![
            cand(S5, 60, 0, 70, 20, 0.9),
            cand(S6, 60, 20, 70, 40, 0.9),
            // labelled 9a but nearer to segment 6
            cand(S9a, 70, 40, 80, 50, 0.8),
            cand(S9, 90, 80, 100, 90, 0.8),
        ]);
        let r = resolve_confusables(&validate_tree(&s, &g, AncestryMode::default()), &g);
        assert_eq!(r.kept[2].class, S9);
        assert_eq!(r.kept[3].class, S9a);
        assert_eq!(r.relabels, vec![(S9a, S9), (S9, S9a)]);

        // already ordered: nothing changes, and a second pass is a no-op
        let again = resolve_confusables(&ValidationReport { relabels: vec![], ..r.clone() }, &g);
        assert!(again.relabels.is_empty());
    }

    #[test]
    fn confusables_need_anchor_and_two_members() {
        let g = default_anatomy_graph();
        let lone = set_of(vec![cand(S5, 0, 0, 10, 10, 0.9), cand(S6, 0, 10, 10, 20, 0.9), cand(S9a, 0, 20, 10, 30, 0.9)]);
        let r = resolve_confusables(&validate_tree(&lone, &g, AncestryMode::default()), &g);
        assert!(r.relabels.is_empty());

        let report = ValidationReport {
            kept: vec![cand(S9a, 0, 0, 10, 10, 0.9), cand(S9, 50, 50, 60, 60, 0.9)],
            removed: vec![],
            laterality: Some(Side::Left),
            relabels: vec![],
        };
        assert!(resolve_confusables(&report, &g).relabels.is_empty());
    }
}

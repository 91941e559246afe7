//! Batch orchestration: enhancement recipes over image directories,
//! candidate post-processing and scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    area_filter, class_filter, default_excluded_classes, erode_mask, merge_ensemble, read_candidates,
    write_candidates, CandidateSegment, CandidateSet, SegmentClass, DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_AREA,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::guided::{guided_smooth, GuidedFilterParams};
use crate::image_core::{adaptive_equalize, gaussian_smooth, normalize, ClaheParams, GrayImage, NormalizeParams};
use crate::io::{is_image_path, read_image, write_image};
use crate::morphology::{default_radii, multiscale_tophat_enhance};
use crate::scalar::Scalar;
use crate::spectral::{directional_filter_bank, homomorphic_enhance, DirectionalParams, FilterKind, HomomorphicParams};
use crate::tree_logic::{
    default_anatomy_graph, resolve_confusables, validate_tree, AncestryMode, AnatomyGraph, Reason, Side,
};

/// Enhancement operations available to a prep recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Homomorphic,
    Normalize,
    Tophat,
    Equalize,
    Gaussian,
    Guided,
    Dfb,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Homomorphic, Stage::Normalize, Stage::Tophat, Stage::Equalize, Stage::Gaussian, Stage::Guided, Stage::Dfb];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Homomorphic => "homomorphic",
            Stage::Normalize => "normalize",
            Stage::Tophat => "tophat",
            Stage::Equalize => "equalize",
            Stage::Gaussian => "gaussian",
            Stage::Guided => "guided",
            Stage::Dfb => "dfb",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Image a stage reads: the original or another stage's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Source {
    #[default]
    Original,
    Stage(Stage),
}

impl TryFrom<String> for Source {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "original" {
            Ok(Source::Original)
        } else {
            s.parse().map(Source::Stage)
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> String {
        match s {
            Source::Original => "original".into(),
            Source::Stage(st) => st.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomomorphicStage {
    pub input: Source,
    pub d0: f64,
    pub order: u32,
    pub kind: FilterKind,
}

impl Default for HomomorphicStage {
    fn default() -> Self {
        let p = HomomorphicParams::<f64>::default();
        Self { input: Source::Original, d0: p.d0, order: p.order, kind: p.kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeStage {
    pub input: Source,
    pub mean: f64,
    pub variance: f64,
}

impl Default for NormalizeStage {
    fn default() -> Self {
        let p = NormalizeParams::<f64>::default();
        Self { input: Source::Stage(Stage::Homomorphic), mean: p.mean, variance: p.variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TophatStage {
    pub input: Source,
    pub radii: Vec<usize>,
}

impl Default for TophatStage {
    fn default() -> Self {
        Self { input: Source::Stage(Stage::Homomorphic), radii: default_radii() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EqualizeStage {
    pub input: Source,
    pub tile: usize,
    pub clip_limit: f64,
}

impl Default for EqualizeStage {
    fn default() -> Self {
        let p = ClaheParams::default();
        Self { input: Source::Original, tile: p.tile, clip_limit: p.clip_limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianStage {
    pub input: Source,
    pub sigma: f64,
}

impl Default for GaussianStage {
    fn default() -> Self {
        Self { input: Source::Original, sigma: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidedStage {
    pub input: Source,
    pub radius: usize,
    pub epsilon: f64,
    pub subsample: usize,
}

impl Default for GuidedStage {
    fn default() -> Self {
        let p = GuidedFilterParams::<f64>::default();
        Self { input: Source::Original, radius: p.radius, epsilon: p.epsilon, subsample: p.subsample }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfbStage {
    pub input: Source,
    pub directions: usize,
    pub cutoff: f64,
    pub stopband_db: f64,
}

impl Default for DfbStage {
    fn default() -> Self {
        let p = DirectionalParams::<f64>::default();
        Self { input: Source::Original, directions: p.directions, cutoff: p.cutoff, stopband_db: p.stopband_db }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSettings {
    pub homomorphic: HomomorphicStage,
    pub normalize: NormalizeStage,
    pub tophat: TophatStage,
    pub equalize: EqualizeStage,
    pub gaussian: GaussianStage,
    pub guided: GuidedStage,
    pub dfb: DfbStage,
}

impl StageSettings {
    pub fn input(&self, stage: Stage) -> Source {
        match stage {
            Stage::Homomorphic => self.homomorphic.input,
            Stage::Normalize => self.normalize.input,
            Stage::Tophat => self.tophat.input,
            Stage::Equalize => self.equalize.input,
            Stage::Gaussian => self.gaussian.input,
            Stage::Guided => self.guided.input,
            Stage::Dfb => self.dfb.input,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AncestryKind {
    Strict,
    #[default]
    Bridging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Stages written by `prep`, in order.
    pub recipe: Vec<Stage>,
    pub stages: StageSettings,
    pub excluded_classes: Vec<SegmentClass>,
    pub min_area: usize,
    pub iou_threshold: f64,
    pub ancestry: AncestryKind,
    /// Bridging tolerance in pixels.
    pub bridging_distance: f64,
    /// Anatomy graph file; the built-in graph when absent.
    pub graph: Option<PathBuf>,
    pub erosion_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            recipe: Stage::ALL.to_vec(),
            stages: StageSettings::default(),
            excluded_classes: default_excluded_classes(),
            min_area: DEFAULT_MIN_AREA,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            ancestry: AncestryKind::Bridging,
            bridging_distance: 50.0,
            graph: None,
            erosion_iterations: 0,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl PipelineConfig {
    /// Parses and validates a TOML config. A relative `graph` path is
    /// resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let (Some(base), Some(g)) = (base_dir, cfg.graph.as_mut()) {
            if g.is_relative() {
                *g = base.join(&*g);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.stages;
        let mut seen = Vec::new();
        for &st in &self.recipe {
            check(!seen.contains(&st), || format!("stage {st} listed twice in recipe"))?;
            seen.push(st);
        }
        for st in Stage::ALL {
            // following inputs must terminate at the original image
            let mut cur = st;
            for _ in 0..=Stage::ALL.len() {
                match s.input(cur) {
                    Source::Original => break,
                    Source::Stage(next) => {
                        check(next != st, || format!("stage {st} depends on itself through its inputs"))?;
                        cur = next;
                    }
                }
            }
        }

        let h = &s.homomorphic;
        check(h.d0.is_finite() && h.d0 > 0.0, || format!("homomorphic.d0 must be > 0, got {}", h.d0))?;
        check(h.order >= 1, || "homomorphic.order must be >= 1".into())?;
        let n = &s.normalize;
        check(n.mean.is_finite(), || "normalize.mean must be finite".into())?;
        check(n.variance.is_finite() && n.variance >= 0.0, || format!("normalize.variance must be >= 0, got {}", n.variance))?;
        let t = &s.tophat;
        check(!t.radii.is_empty(), || "tophat.radii is empty".into())?;
        check(t.radii.windows(2).all(|p| p[0] < p[1]), || format!("tophat.radii must increase strictly: {:?}", t.radii))?;
        let e = &s.equalize;
        check(e.tile >= 1, || "equalize.tile must be >= 1".into())?;
        check(e.clip_limit > 0.0 && e.clip_limit <= 1.0, || format!("equalize.clip_limit must be in (0, 1], got {}", e.clip_limit))?;
        let g = &s.gaussian;
        check(g.sigma.is_finite() && g.sigma > 0.0, || format!("gaussian.sigma must be > 0, got {}", g.sigma))?;
        let gf = &s.guided;
        check(gf.radius >= 1, || "guided.radius must be >= 1".into())?;
        check(gf.epsilon.is_finite() && gf.epsilon >= 0.0, || format!("guided.epsilon must be >= 0, got {}", gf.epsilon))?;
        check(gf.subsample >= 1, || "guided.subsample must be >= 1".into())?;
        let d = &s.dfb;
        check(d.directions >= 2, || "dfb.directions must be >= 2".into())?;
        check(d.cutoff > 0.0 && d.cutoff < std::f64::consts::PI, || format!("dfb.cutoff must be in (0, pi), got {}", d.cutoff))?;
        check(d.stopband_db.is_finite() && d.stopband_db > 0.0, || "dfb.stopband_db must be > 0".into())?;

        check(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0, || {
            format!("iou_threshold must be in (0, 1], got {}", self.iou_threshold)
        })?;
        check(self.bridging_distance.is_finite() && self.bridging_distance >= 0.0, || {
            format!("bridging_distance must be >= 0, got {}", self.bridging_distance)
        })?;
        Ok(())
    }

    pub fn ancestry_mode(&self) -> AncestryMode {
        match self.ancestry {
            AncestryKind::Strict => AncestryMode::Strict,
            AncestryKind::Bridging => AncestryMode::Bridging { max_distance: self.bridging_distance },
        }
    }

    pub fn anatomy_graph(&self) -> Result<AnatomyGraph> {
        match &self.graph {
            Some(p) => AnatomyGraph::load(p),
            None => Ok(default_anatomy_graph()),
        }
    }
}

fn apply_stage<T: Scalar>(stage: Stage, img: &GrayImage<T>, s: &StageSettings) -> Result<GrayImage<T>> {
    match stage {
        Stage::Homomorphic => homomorphic_enhance(
            img,
            HomomorphicParams { d0: T::lit(s.homomorphic.d0), order: s.homomorphic.order, kind: s.homomorphic.kind },
        ),
        Stage::Normalize => {
            normalize(img, NormalizeParams { mean: T::lit(s.normalize.mean), variance: T::lit(s.normalize.variance) })
        }
        Stage::Tophat => multiscale_tophat_enhance(img, &s.tophat.radii),
        Stage::Equalize => adaptive_equalize(img, ClaheParams { tile: s.equalize.tile, clip_limit: s.equalize.clip_limit }),
        Stage::Gaussian => gaussian_smooth(img, T::lit(s.gaussian.sigma)),
        Stage::Guided => guided_smooth(
            img,
            GuidedFilterParams { radius: s.guided.radius, epsilon: T::lit(s.guided.epsilon), subsample: s.guided.subsample },
        ),
        Stage::Dfb => directional_filter_bank(
            img,
            DirectionalParams {
                directions: s.dfb.directions,
                cutoff: T::lit(s.dfb.cutoff),
                stopband_db: T::lit(s.dfb.stopband_db),
            },
        ),
    }
}

/// Runs the requested stages on one image, computing each stage's input
/// chain once.
pub fn run_stages<T: Scalar>(
    img: &GrayImage<T>,
    settings: &StageSettings,
    stages: &[Stage],
) -> Result<Vec<(Stage, GrayImage<T>)>> {
    fn compute<T: Scalar>(
        stage: Stage,
        img: &GrayImage<T>,
        settings: &StageSettings,
        cache: &mut HashMap<Stage, GrayImage<T>>,
    ) -> Result<GrayImage<T>> {
        if let Some(done) = cache.get(&stage) {
            return Ok(done.clone());
        }
        let input = match settings.input(stage) {
            Source::Original => img.clone(),
            Source::Stage(prev) => compute(prev, img, settings, cache)?,
        };
        let out = apply_stage(stage, &input, settings)?;
        cache.insert(stage, out.clone());
        Ok(out)
    }

    let mut cache = HashMap::new();
    stages.iter().map(|&st| Ok((st, compute(st, img, settings, &mut cache)?))).collect()
}

/// Output location of one stage for one input image.
pub fn stage_output_path(output_dir: &Path, stage: Stage, input: &Path) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    output_dir.join(stage.name()).join(format!("{stem}.{stage}.png"))
}

#[derive(Debug, Default, Clone)]
pub struct PrepSummary {
    pub images: usize,
    pub written: Vec<PathBuf>,
    pub skipped: Vec<(PathBuf, String)>,
}

impl PrepSummary {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }
}

/// Lists readable image files in a directory, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Applies the recipe (or a single stage) to every image in `input_dir`.
///
/// Images are processed on up to `jobs` threads. Files that cannot be read
/// or processed are skipped and reported in the summary.
pub fn run_prep(
    config: &PipelineConfig,
    input_dir: &Path,
    output_dir: &Path,
    only: Option<Stage>,
    jobs: usize,
) -> Result<PrepSummary> {
    let stages: Vec<Stage> = match only {
        Some(st) => vec![st],
        None => config.recipe.clone(),
    };
    let inputs = list_images(input_dir)?;
    if inputs.is_empty() {
        log::warn!("no images found in {}", input_dir.display());
    }
    for st in &stages {
        let dir = output_dir.join(st.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let results: Vec<(PathBuf, Result<Vec<PathBuf>>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let res = read_image::<f32>(path).and_then(|img| {
                    let outs = run_stages(&img, &config.stages, &stages)?;
                    let mut written = Vec::with_capacity(outs.len());
                    for (st, out) in outs {
                        let target = stage_output_path(output_dir, st, path);
                        write_image(&target, &out)?;
                        written.push(target);
                    }
                    Ok(written)
                });
                (path.clone(), res)
            })
            .collect()
    });

    let mut summary = PrepSummary { images: inputs.len(), ..Default::default() };
    for (path, res) in results {
        match res {
            Ok(w) => summary.written.extend(w),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                summary.skipped.push((path, e.to_string()));
            }
        }
    }
    Ok(summary)
}

/// Why a candidate was dropped during post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    AreaFilter,
    ClassFilter,
    LateralityConflict,
    OrphanPath,
    DuplicateClass,
}

impl From<Reason> for RemovalReason {
    fn from(r: Reason) -> Self {
        match r {
            Reason::LateralityConflict => RemovalReason::LateralityConflict,
            Reason::OrphanPath => RemovalReason::OrphanPath,
            Reason::DuplicateClass | Reason::Relabeled => RemovalReason::DuplicateClass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub class: SegmentClass,
    pub source: String,
    pub confidence: f64,
    pub area: usize,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabel {
    pub from: SegmentClass,
    pub to: SegmentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLog {
    pub image_id: u64,
    pub laterality: Option<Side>,
    pub kept: usize,
    pub removed: Vec<Removal>,
    pub relabels: Vec<Relabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PostLog {
    pub images: Vec<ImageLog>,
}

fn removal(c: &CandidateSegment, reason: RemovalReason) -> Removal {
    Removal { class: c.class, source: c.source.clone(), confidence: c.confidence, area: c.area(), reason }
}

/// Candidates of `before` missing from `after`, where `after` is an ordered
/// subsequence of `before`.
fn dropped<'a>(before: &'a CandidateSet, after: &CandidateSet) -> Vec<&'a CandidateSegment> {
    let mut rest = after.candidates.iter().peekable();
    before
        .candidates
        .iter()
        .filter(|c| {
            if rest.peek() == Some(c) {
                rest.next();
                false
            } else {
                true
            }
        })
        .collect()
}

/// Post-processes one image's candidate sets (one per source).
///
/// The chain is fixed: ensemble merge, area filter, class filter, optional
/// erosion, anatomy validation, then confusable-label resolution.
pub fn postprocess_image(
    config: &PipelineConfig,
    graph: &AnatomyGraph,
    sources: &[CandidateSet],
) -> Result<(CandidateSet, ImageLog)> {
    let merged = merge_ensemble(sources, config.iou_threshold)?;
    let mut removed = Vec::new();

    let by_area = area_filter(&merged, config.min_area);
    removed.extend(dropped(&merged, &by_area).into_iter().map(|c| removal(c, RemovalReason::AreaFilter)));
    let mut by_class = class_filter(&by_area, &config.excluded_classes);
    removed.extend(dropped(&by_area, &by_class).into_iter().map(|c| removal(c, RemovalReason::ClassFilter)));

    if config.erosion_iterations > 0 {
        for c in &mut by_class.candidates {
            *c = erode_mask(c, config.erosion_iterations);
        }
    }

    let report = resolve_confusables(&validate_tree(&by_class, graph, config.ancestry_mode()), graph);
    removed.extend(report.removed.iter().map(|(c, r)| removal(c, (*r).into())));

    let mut out = by_class.clone();
    out.candidates = report.kept;
    let log = ImageLog {
        image_id: out.image_id,
        laterality: report.laterality,
        kept: out.candidates.len(),
        removed,
        relabels: report.relabels.into_iter().map(|(from, to)| Relabel { from, to }).collect(),
    };
    Ok((out, log))
}

/// Path of the removal log written next to a post-processing output.
pub fn log_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("candidates");
    output.with_file_name(format!("{stem}.log.json"))
}

/// Groups prediction files by image. Every file contributes one source set
/// per image it lists; images missing from a file get no set from it.
pub fn group_by_image(files: &[Vec<CandidateSet>]) -> Result<BTreeMap<u64, Vec<CandidateSet>>> {
    let mut groups: BTreeMap<u64, Vec<CandidateSet>> = BTreeMap::new();
    for sets in files {
        for s in sets {
            let g = groups.entry(s.image_id).or_default();
            if let Some(first) = g.first() {
                if (first.width, first.height) != (s.width, s.height) {
                    return Err(Error::Schema(format!(
                        "image {} declared as {}x{} and {}x{}",
                        s.image_id, first.width, first.height, s.width, s.height
                    )));
                }
            }
            g.push(s.clone());
        }
    }
    Ok(groups)
}

/// Reads prediction files, post-processes every image and writes the final
/// candidate file plus its removal log.
pub fn run_postprocess(config: &PipelineConfig, predictions: &[PathBuf], output: &Path) -> Result<PostLog> {
    if predictions.is_empty() {
        return Err(Error::Config("no prediction files given".into()));
    }
    let graph = config.anatomy_graph()?;
    let files = predictions.iter().map(|p| read_candidates(p)).collect::<Result<Vec<_>>>()?;
    let groups = group_by_image(&files)?;

    let mut finals = Vec::with_capacity(groups.len());
    let mut log = PostLog::default();
    for sources in groups.values() {
        let (set, entry) = postprocess_image(config, &graph, sources)?;
        finals.push(set);
        log.images.push(entry);
    }
    write_candidates(output, &finals)?;
    let log_path = log_path_for(output);
    let text = serde_json::to_string_pretty(&log)? + "\n";
    std::fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
    Ok(log)
}

/// Scores a prediction file against ground truth and writes the report.
pub fn run_eval(predictions: &Path, ground_truth: &Path, output: Option<&Path>) -> Result<EvalReport> {
    let pred = read_candidates(predictions)?;
    let gt = read_candidates(ground_truth)?;
    let report = evaluate(&pred, &gt)?;
    if let Some(out) = output {
        std::fs::write(out, report.to_json()? + "\n").map_err(|e| Error::io(out, e))?;
    }
    Ok(report)
}

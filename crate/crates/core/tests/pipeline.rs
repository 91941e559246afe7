use std::path::{Path, PathBuf};

use angio_core::candidates::{area_filter, class_filter, merge_ensemble, read_candidates, write_candidates, CandidateSet};
use angio_core::io::write_image;
use angio_core::pipeline::{group_by_image, log_path_for, run_eval, run_postprocess, run_prep, PipelineConfig, RemovalReason};
use angio_core::synthetic::{ablation_corpus, vessel_phantom};
use angio_core::tree_logic::default_anatomy_graph;
use angio_core::GrayImageF32;

fn write_corpus(dir: &Path, count: usize) -> (Vec<PathBuf>, PathBuf) {
    let corpus = ablation_corpus(11, count, 256, &default_anatomy_graph());
    let sources = corpus[0].detections.len();
    let mut files = Vec::new();
    for s in 0..sources {
        let sets: Vec<CandidateSet> = corpus.iter().map(|c| c.detections[s].clone()).collect();
        let path = dir.join(format!("detector_{s}.json"));
        write_candidates(&path, &sets).unwrap();
        files.push(path);
    }
    let gt: Vec<CandidateSet> = corpus.iter().map(|c| c.ground_truth.clone()).collect();
    let gt_path = dir.join("gt.json");
    write_candidates(&gt_path, &gt).unwrap();
    (files, gt_path)
}

#[test]
fn postprocessing_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (preds, _) = write_corpus(dir.path(), 4);
    let config = PipelineConfig::default();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    run_postprocess(&config, &preds, &a).unwrap();
    run_postprocess(&config, &preds, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(log_path_for(&a)).unwrap(), std::fs::read(log_path_for(&b)).unwrap());
}

#[test]
fn postprocessing_improves_the_synthetic_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (preds, gt) = write_corpus(dir.path(), 6);
    let out = dir.path().join("final.json");
    let config = PipelineConfig::default();
    let log = run_postprocess(&config, &preds, &out).unwrap();

    let files: Vec<Vec<CandidateSet>> = preds.iter().map(|p| read_candidates(p).unwrap()).collect();
    let unvalidated: Vec<CandidateSet> = group_by_image(&files)
        .unwrap()
        .values()
        .map(|sources| {
            let merged = merge_ensemble(sources, config.iou_threshold).unwrap();
            class_filter(&area_filter(&merged, config.min_area), &config.excluded_classes)
        })
        .collect();
    let baseline_path = dir.path().join("unvalidated.json");
    write_candidates(&baseline_path, &unvalidated).unwrap();

    let baseline = run_eval(&baseline_path, &gt, None).unwrap();
    let processed = run_eval(&out, &gt, Some(&dir.path().join("report.json"))).unwrap();
    assert!(processed.mean_f1 > baseline.mean_f1, "{} vs {}", processed.mean_f1, baseline.mean_f1);
    assert!(dir.path().join("report.json").is_file());

    let written = read_candidates(&out).unwrap();
    assert_eq!(written.len(), log.images.len());
    for (set, entry) in written.iter().zip(&log.images) {
        assert_eq!(set.image_id, entry.image_id);
        assert_eq!(set.len(), entry.kept);
    }
    let reasons: Vec<RemovalReason> = log.images.iter().flat_map(|i| i.removed.iter().map(|r| r.reason)).collect();
    assert!(reasons.contains(&RemovalReason::LateralityConflict));
    assert!(reasons.contains(&RemovalReason::OrphanPath));
}

#[test]
fn strict_ancestry_never_keeps_more_than_bridging() {
    let dir = tempfile::tempdir().unwrap();
    let (preds, _) = write_corpus(dir.path(), 6);
    let bridging = run_postprocess(&PipelineConfig::default(), &preds, &dir.path().join("b.json")).unwrap();
    let strict_cfg = PipelineConfig::from_toml_str("ancestry = \"strict\"\n", None).unwrap();
    let strict = run_postprocess(&strict_cfg, &preds, &dir.path().join("s.json")).unwrap();
    for (s, b) in strict.images.iter().zip(&bridging.images) {
        assert!(s.kept <= b.kept);
    }
}

#[test]
fn prep_outputs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let phantom: GrayImageF32 = vessel_phantom(64, 64, 3.0);
    write_image(&input.join("p.pgm"), &phantom).unwrap();

    let config = PipelineConfig::default();
    let first = run_prep(&config, &input, &dir.path().join("o1"), None, 2).unwrap();
    let second = run_prep(&config, &input, &dir.path().join("o2"), None, 1).unwrap();
    assert_eq!(first.written.len(), config.recipe.len());
    assert!(!first.is_partial());
    for (a, b) in first.written.iter().zip(&second.written) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
}

#[test]
fn readme_config_block_matches_the_defaults() {
    let readme = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).and_then(|rest| rest.split("```").next()).unwrap();
    assert_eq!(PipelineConfig::from_toml_str(block, None).unwrap(), PipelineConfig::default());
}

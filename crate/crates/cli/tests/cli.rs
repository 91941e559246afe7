use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use angio_core::io::write_image;
use angio_core::GrayImageF32;

fn angio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_angio")).args(args).output().expect("binary runs")
}

fn core_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn sample_image(path: &Path) {
    let img = GrayImageF32::from_fn(48, 40, |x, y| ((x * 5 + y * 3) % 200) as f32 + 20.0).unwrap();
    write_image(path, &img).unwrap();
}

#[test]
fn prep_writes_one_file_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    std::fs::create_dir(&input).unwrap();
    sample_image(&input.join("frame.png"));
    let cfg = write_config(dir.path(), "recipe = [\"homomorphic\", \"normalize\"]\n");

    let res = angio(&["--config", s(&cfg), "prep", s(&input), s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("homomorphic/frame.homomorphic.png").is_file());
    assert!(out.join("normalize/frame.normalize.png").is_file());
    let written = walk(&out);
    assert_eq!(written.len(), 2, "{written:?}");
}

#[test]
fn prep_on_empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let res = angio(&["prep", s(&input), s(&dir.path().join("out"))]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn prep_skips_unreadable_images_and_reports_partial() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    std::fs::create_dir(&input).unwrap();
    sample_image(&input.join("good.png"));
    std::fs::write(input.join("broken.png"), b"definitely not a png").unwrap();
    let cfg = write_config(dir.path(), "recipe = [\"normalize\"]\n");

    let res = angio(&["--config", s(&cfg), "prep", s(&input), s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("broken.png"));
    assert!(out.join("normalize/good.normalize.png").is_file());
}

#[test]
fn prep_single_stage_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    sample_image(&input.join("a.png"));
    let cfg = write_config(dir.path(), "recipe = [\"gaussian\", \"guided\"]\n");
    for run in ["o1", "o2"] {
        let res = angio(&["--config", s(&cfg), "prep", "--stage", "guided", s(&input), s(&dir.path().join(run))]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read(dir.path().join("o1/guided/a.guided.png")).unwrap();
    let b = std::fs::read(dir.path().join("o2/guided/a.guided.png")).unwrap();
    assert_eq!(a, b);
    assert!(!dir.path().join("o1/gaussian").exists());
}

#[test]
fn post_removes_the_opposite_side_segment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("final.json");
    let preds = core_path("tests/fixtures/mixed_side_candidates.json");
    let res = angio(&["post", s(&preds), "-o", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("final.log.json")).unwrap()).unwrap();
    let image = &log["images"][0];
    assert_eq!(image["kept"], 2);
    assert_eq!(image["removed"].as_array().unwrap().len(), 1);
    assert_eq!(image["removed"][0]["reason"], "laterality_conflict");
    assert_eq!(image["removed"][0]["class"], "1");

    let eval = angio(&["eval", s(&out), s(&core_path("tests/fixtures/mixed_side_ground_truth.json"))]);
    assert!(eval.status.success());
}

#[test]
fn post_min_area_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("final.json");
    let preds = core_path("tests/fixtures/mixed_side_candidates.json");
    let res = angio(&["post", s(&preds), "-o", s(&out), "--min-area", "100000"]);
    assert!(res.status.success());
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("final.log.json")).unwrap()).unwrap();
    let removed = log["images"][0]["removed"].as_array().unwrap();
    assert_eq!(removed.len(), 3);
    assert!(removed.iter().all(|r| r["reason"] == "area_filter"));
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gt = core_path("tests/fixtures/mixed_side_ground_truth.json");
    let report = dir.path().join("report.json");
    let res = angio(&["eval", s(&gt), s(&gt), "-o", s(&report)]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["mean_f1"], 1.0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("1.0000"));
}

#[test]
fn graph_check_accepts_shipped_graph() {
    let res = angio(&["graph-check", s(&core_path("data/syntax_graph.toml"))]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("ok"));
}

#[test]
fn graph_check_rejects_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.toml");
    std::fs::write(
        &path,
        "roots = [\"1\"]\nedges = [[\"1\", \"2\"], [\"2\", \"3\"], [\"3\", \"2\"]]\n[laterality]\nright = [\"1\", \"2\", \"3\"]\nleft = []\n",
    )
    .unwrap();
    assert_eq!(angio(&["graph-check", s(&path)]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for body in ["recipe = [\"sharpen\"]\n", "min_area = 10\nunknown_key = 3\n", "iou_threshold = 1.5\n"] {
        let cfg = write_config(dir.path(), body);
        let res = angio(&["--config", s(&cfg), "prep", s(&input), s(&dir.path().join("out"))]);
        assert_eq!(res.status.code(), Some(2), "{body}");
    }
}

#[test]
fn malformed_predictions_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.json");
    std::fs::write(&preds, "{\"not\": \"a candidate list\"}").unwrap();
    let res = angio(&["post", s(&preds), "-o", s(&dir.path().join("o.json"))]);
    assert_eq!(res.status.code(), Some(2));
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files.sort();
    files
}

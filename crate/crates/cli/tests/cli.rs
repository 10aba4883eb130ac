use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use scoreforge::corpus::{load_corpus, save_corpus, write_detections};
use scoreforge::fixture::{write_fixture, FixtureConfig};
use scoreforge::saepost::{save_probmap, ProbMap};
use scoreforge::{AnnotatedCorpus, BBox, ClassId, Detection};

const BIN: &str = env!("CARGO_BIN_EXE_scoreforge");

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for var in ["SCOREFORGE_SEED", "SCOREFORGE_CONFIG", "SCOREFORGE_THREADS", "SCOREFORGE_OUT", "SCOREFORGE_CORPUS"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_fixture(dir: &Path, pages: usize) -> (AnnotatedCorpus, PathBuf) {
    let corpus = write_fixture(
        &FixtureConfig {
            pages,
            width: 240,
            height: 180,
            seed: 11,
        },
        dir,
    )
    .unwrap();
    (corpus, dir.join("annotations.json"))
}

fn perfect(corpus: &AnnotatedCorpus) -> Vec<Detection> {
    corpus
        .regions()
        .map(|r| Detection {
            id: None,
            page_id: r.page_id,
            class: r.class,
            bbox: r.bbox,
            confidence: 0.95,
        })
        .collect()
}

#[test]
fn generate_zero_pages() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 2);
    let out = dir.path().join("out");
    ok(&["generate", "--corpus", s(&ann), "--n", "0", "--out", s(&out)]);
    let c = load_corpus(out.join("annotations.json")).unwrap();
    assert!(c.pages.is_empty());
    assert_eq!(json(&out.join("generate_report.json"))["result"]["pages"], 0);
}

#[test]
fn generate_failure_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ann) = small_fixture(&dir.path().join("fx"), 2);
    let out = dir.path().join("out");

    let r = run(&["generate", "--corpus", s(&ann), "--rotation-range", "-1", "--out", s(&out)], &[]);
    assert!(!r.status.success());

    // an image disappears after the corpus was written
    std::fs::remove_file(corpus.image_path(&corpus.pages[1])).unwrap();
    let r = run(&["generate", "--corpus", s(&ann), "--n", "20", "--out", s(&out)], &[]);
    assert!(!r.status.success());
    let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, ["fx"]);
}

#[test]
fn generate_refuses_foreign_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 2);
    let out = dir.path().join("out");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "mine").unwrap();
    let r = run(&["generate", "--corpus", s(&ann), "--n", "2", "--out", s(&out)], &[]);
    assert!(!r.status.success());
    assert_eq!(std::fs::read_to_string(out.join("keep.txt")).unwrap(), "mine");
    // earlier generate output is replaced
    let again = dir.path().join("again");
    ok(&["generate", "--corpus", s(&ann), "--n", "2", "--out", s(&again)]);
    ok(&["generate", "--corpus", s(&ann), "--n", "3", "--out", s(&again)]);
    assert_eq!(load_corpus(again.join("annotations.json")).unwrap().pages.len(), 3);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 3);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--threads", "1", "generate", "--corpus", s(&ann), "--n", "12", "--seed", "4", "--out", s(&a)]);
    ok(&["--threads", "4", "generate", "--corpus", s(&ann), "--n", "12", "--seed", "4", "--out", s(&b)]);
    for name in ["annotations.json", "provenance.json", "generate_report.json", "images/synth_00011.png"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 2);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 1\n[generate]\ncorpus = {:?}\nn = 2\nrotation_range = 1.5\n", s(&ann)),
    )
    .unwrap();
    let report = |env: &[(&str, &str)], extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["--config", s(&cfg), "generate", "--out", s(&out)];
        args.extend_from_slice(extra);
        let r = run(&args, env);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        json(&out.join("generate_report.json"))["config"].clone()
    };
    let file_only = report(&[], &[], "f");
    assert_eq!((file_only["seed"].as_u64(), file_only["n"].as_u64()), (Some(1), Some(2)));
    assert_eq!(file_only["rotation_range"], 1.5);
    assert_eq!(file_only["max_retries"], 10);
    let env = report(&[("SCOREFORGE_SEED", "2")], &[], "e");
    assert_eq!(env["seed"], 2);
    let flag = report(&[("SCOREFORGE_SEED", "2")], &["--seed", "3"], "g");
    assert_eq!(flag["seed"], 3);
}

#[test]
fn eval_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ann) = small_fixture(&dir.path().join("fx"), 3);
    let dets = dir.path().join("perfect.json");
    write_detections(&perfect(&corpus), &dets).unwrap();
    let out = dir.path().join("ev");
    ok(&["eval", "--corpus", s(&ann), "--detections", s(&dets), "--out", s(&out)]);
    let r = &json(&out.join("eval_report.json"))["result"];
    assert_eq!(r["map"], 1.0);
    assert_eq!(r["macro_f1"], 1.0);
    assert_eq!(r["map_display"], "100.0");

    let sweep_out = dir.path().join("sw");
    ok(&["sweep", "--corpus", s(&ann), "--detections", s(&dets), "--out", s(&sweep_out)]);
    let best = &json(&sweep_out.join("sweep_report.json"))["result"]["best"];
    assert_eq!((best["conf_thr"].as_f64(), best["iou_thr"].as_f64()), (Some(0.05), Some(0.5)));
    assert_eq!(best["mf1"], 1.0);

    let empty = dir.path().join("empty.json");
    write_detections(&[], &empty).unwrap();
    ok(&["eval", "--corpus", s(&ann), "--detections", s(&empty), "--out", s(&out), "--conf-thr", "0.5", "--iou-thr", "0.5"]);
    let r = &json(&out.join("eval_report.json"))["result"];
    assert_eq!(r["map"], 0.0);
    assert_eq!(r["macro_recall"], 0.0);
    assert_eq!(r["thresholds_from_sweep"], false);
}

#[test]
fn eval_rejects_foreign_pages() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ann) = small_fixture(&dir.path().join("fx"), 2);
    let mut dets = perfect(&corpus);
    dets[0].page_id = 99;
    let path = dir.path().join("d.json");
    write_detections(&dets, &path).unwrap();
    let r = run(&["eval", "--corpus", s(&ann), "--detections", s(&path), "--out", s(&dir.path().join("o"))], &[]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("page 99"));
}

#[test]
fn split_full_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 150);
    let out = dir.path().join("split");
    ok(&["split", "--corpus", s(&ann), "--seed", "8", "--out", s(&out)]);
    let r = &json(&out.join("split_report.json"))["result"];
    let ladder: Vec<&String> = r["train_subsets"].as_object().unwrap().keys().collect();
    assert_eq!(ladder, ["1", "16", "2", "32", "4", "64", "8"]);
    assert_eq!(r["full_ladder"], true);
    assert_eq!(r["validation"].as_array().unwrap().len(), 43);
    assert_eq!(r["test"].as_array().unwrap().len(), 43);
    // subset files point at the original images
    let sub = load_corpus(out.join("train_04.json")).unwrap();
    assert_eq!(sub.pages.len(), 4);
    sub.load_image(&sub.pages[0]).unwrap();
}

#[test]
fn postprocess_three_rectangles() {
    let dir = tempfile::tempdir().unwrap();
    let (mut corpus, _) = small_fixture(&dir.path().join("fx"), 1);
    corpus.pages[0].width = 100;
    corpus.pages[0].height = 60;
    corpus.pages[0].regions.clear();
    let ann = dir.path().join("fx").join("small.json");
    save_corpus(&corpus, &ann).unwrap();

    let rects = [(5u32, 5u32, 30u32, 10u32), (60, 8, 20, 30), (5, 30, 40, 12)];
    let data = (0..6000)
        .map(|i| {
            let (x, y) = (i % 100, i / 100);
            let hit = rects.iter().any(|&(rx, ry, w, h)| x >= rx && x < rx + w && y >= ry && y < ry + h);
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    save_probmap(&ProbMap::new(100, 60, data).unwrap(), &maps.join("0.staff.png")).unwrap();
    let out = dir.path().join("pp");
    ok(&["postprocess", "--corpus", s(&ann), "--probmaps", s(&maps), "--out", s(&out), "--ratio", "0"]);
    let dets = scoreforge::corpus::read_detections(out.join("detections.json")).unwrap();
    assert_eq!(dets.len(), 3);
    assert!(dets.iter().all(|d| d.class == ClassId(1) && d.confidence == 1.0));
    assert_eq!(dets[0].bbox, BBox::new(5.0, 5.0, 30.0, 10.0).unwrap());

    std::fs::write(maps.join("0.nosuchclass.png"), std::fs::read(maps.join("0.staff.png")).unwrap()).unwrap();
    let r = run(&["postprocess", "--corpus", s(&ann), "--probmaps", s(&maps), "--out", s(&out)], &[]);
    assert!(!r.status.success());
}

#[test]
fn validate_reports_findings() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 2);
    let stdout = ok(&["validate", "--corpus", s(&ann)]);
    assert!(stdout.contains("valid"));

    let mut v = json(&ann);
    v["annotations"][0]["bbox"] = serde_json::json!([230.0, 10.0, 50.0, 10.0]);
    v["annotations"][1]["id"] = v["annotations"][2]["id"].clone();
    let bad = dir.path().join("fx").join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = dir.path().join("val");
    let r = run(&["validate", "--corpus", s(&bad), "--out", s(&out)], &[]);
    assert!(!r.status.success());
    let report = json(&out.join("validate_report.json"));
    let kinds: Vec<&str> = report["result"]["findings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"out_of_bounds") && kinds.contains(&"duplicate_region_id"), "{kinds:?}");
    assert_eq!(report["result"]["valid"], false);
}

#[test]
fn goal_eval_from_fake_recognizer() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ann) = small_fixture(&dir.path().join("fx"), 3);
    let det = dir.path().join("det");
    ok(&["fake-detect", "--corpus", s(&ann), "--out", s(&det), "--transcriptions", "--jitter", "0", "--miss-rate", "0", "--max-false-positives", "0", "--base-error", "0"]);
    let out = dir.path().join("goal");
    ok(&[
        "goal-eval",
        "--corpus",
        s(&ann),
        "--detections",
        s(&det.join("detections.json")),
        "--reference",
        s(&det.join("reference.tsv")),
        "--hyp-gt",
        s(&det.join("hyp_gt.tsv")),
        "--hyp-det",
        s(&det.join("hyp_det.tsv")),
        "--out",
        s(&out),
        "--label",
        "fx",
    ]);
    let r = &json(&out.join("goal_report.json"))["result"];
    assert!(r["pairs"].as_u64().unwrap() > 0);
    assert_eq!(r["summary"]["above"]["mean"], 0.0);
    let csv = std::fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",fx")));
}

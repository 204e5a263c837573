use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsdetect::envi;
use hsdetect::{Method, ScoreMap};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsdetect"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Scene {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Scene {
    fn new(bands: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let s = Self { _dir: dir, root };
        ok(&[
            "--seed", "3", "synth", "--out", &s.p("scene"), "--lines", "40", "--samples", "40",
            "--bands", &bands.to_string(), "--targets", "20",
        ]);
        s
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }

    fn detect(&self, method: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "detect", "--cube", &self.p("scene/cube.hdr"), "--signature", &self.p("scene/signature.csv"),
            "--method", method, "--regions", &self.p("scene/regions.txt"), "--region", "test",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        run(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn runs(&self, dir: &str) -> Vec<serde_json::Value> {
        fs::read_to_string(self.root.join(dir).join("runs.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

fn listing(dir: &Path) -> Vec<String> {
    match fs::read_dir(dir) {
        Ok(entries) => {
            let mut v: Vec<String> = entries
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            v.sort();
            v
        }
        Err(_) => Vec::new(),
    }
}

#[test]
fn missing_signature_is_a_validation_error_naming_the_path() {
    let s = Scene::new(8);
    let missing = s.p("nowhere/sig.csv");
    let out = run(&[
        "detect", "--cube", &s.p("scene/cube.hdr"), "--signature", &missing, "--method", "ace",
        "--out", &s.p("out"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains(&missing), "{msg}");
    assert_eq!(msg.trim().lines().count(), 1, "{msg}");
}

#[test]
fn detect_report_has_no_auc_and_records_the_cem_variant() {
    let s = Scene::new(8);
    assert!(s.detect("ace", &["--out", &s.p("out")]).status.success());
    assert!(s.detect("cem", &["--centered-cem", "--out", &s.p("out")]).status.success());
    assert!(s.detect("cem", &["--out", &s.p("out")]).status.success());
    let runs = s.runs("out");
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| r.get("auc").is_none() && r.get("ap").is_none()));
    assert_eq!(runs[0]["method"], "ace");
    assert_eq!(runs[0]["region"], "test");
    assert!(runs[0]["ridge"].as_f64().unwrap() > 0.0);
    assert_eq!(runs[1]["variant"], "centered");
    assert_eq!(runs[2]["variant"], "uncentered");
    for f in ["test_ace.hdr", "test_ace.img", "test_cem.hdr", "test_cem.img"] {
        assert!(s.root.join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn failed_runs_leave_no_outputs() {
    let s = Scene::new(8);
    let out = s.detect("ace", &["--window", "0,0,400,400", "--out", &s.p("out")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(listing(&s.root.join("out")).is_empty());

    let out = run(&[
        "detect", "--cube", &s.p("scene/cube.hdr"), "--signature", &s.p("scene/signature.csv"),
        "--method", "mf", "--region", "nosuch", "--out", &s.p("out"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nosuch"));

    let out = run(&["detect", "--method", "ace"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn band_mismatched_model_is_rejected() {
    let a = Scene::new(8);
    let b = Scene::new(10);
    ok(&[
        "train-nn", "--cube", &a.p("scene/cube.hdr"), "--mask", &a.p("scene/mask.hdr"),
        "--regions", &a.p("scene/regions.txt"), "--region", "train", "--epochs", "2", "--out", &a.p("nn"),
    ]);
    let out = run(&[
        "score-nn", "--cube", &b.p("scene/cube.hdr"), "--model", &a.p("nn/nn_model.bin"),
        "--out", &b.p("maps"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bands"), "{}", stderr(&out));
    assert!(listing(&b.root.join("maps")).is_empty());
}

#[test]
fn retraining_with_the_same_seed_gives_identical_model_bytes() {
    let s = Scene::new(8);
    let train = |out: &str, seed: &str| {
        ok(&[
            "--seed", seed, "train-nn", "--cube", &s.p("scene/cube.hdr"), "--mask", &s.p("scene/mask.hdr"),
            "--regions", &s.p("scene/regions.txt"), "--region", "train", "--epochs", "3",
            "--batch-size", "128", "--out", &s.p(out),
        ]);
        (
            fs::read(s.root.join(out).join("nn_model.bin")).unwrap(),
            fs::read_to_string(s.root.join(out).join("nn_loss.csv")).unwrap(),
        )
    };
    let (m1, l1) = train("a", "5");
    let (m2, l2) = train("b", "5");
    let (m3, _) = train("c", "6");
    assert_eq!(m1, m2);
    assert_eq!(l1, l2);
    assert_ne!(m1, m3);
    assert!(l1.starts_with("epoch,mean_loss\n"));
    assert_eq!(l1.lines().count(), 4);
}

#[test]
fn parallel_detection_matches_single_threaded() {
    let s = Scene::new(8);
    assert!(s.detect("ace", &["--out", &s.p("one")]).status.success());
    let mut args = vec!["--parallel", "4"];
    let out = s.p("four");
    args.extend(["detect", "--cube"]);
    let cube = s.p("scene/cube.hdr");
    let sig = s.p("scene/signature.csv");
    let regions = s.p("scene/regions.txt");
    args.extend([cube.as_str(), "--signature", &sig, "--method", "ace", "--regions", &regions]);
    args.extend(["--region", "test", "--out", &out]);
    ok(&args);
    for f in ["test_ace.img", "test_ace.hdr", "runs.jsonl"] {
        assert_eq!(
            fs::read(s.root.join("one").join(f)).unwrap(),
            fs::read(s.root.join("four").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_matches_library_and_scores_a_perfect_detector_as_one() {
    let s = Scene::new(8);
    let mask_hdr = s.p("scene/mask.hdr");
    let header = envi::read_header_file(Path::new(&mask_hdr)).unwrap();
    let raster = envi::raster_path_for(Path::new(&mask_hdr)).unwrap();
    let mask = envi::read_mask(&header, &mut fs::File::open(raster).unwrap()).unwrap();
    let perfect = ScoreMap::new(
        mask.region().renamed("full"),
        Method::Ace,
        mask.labels().iter().map(|&v| v as f64).collect(),
    )
    .unwrap();
    fs::create_dir_all(s.root.join("maps")).unwrap();
    envi::write_scoremap(&perfect, &s.root.join("maps/full_ace.hdr"), &s.root.join("maps/full_ace.img")).unwrap();
    ok(&["eval", "--scores", &s.p("maps/full_ace.hdr"), "--mask", &mask_hdr, "--out", &s.p("eval"), "--svg"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.root.join("eval/full_ace_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["auc"], 1.0);
    assert_eq!(summary["ap"], 1.0);
    assert_eq!(summary["positives"], 20);

    assert!(s.detect("mf", &["--out", &s.p("maps")]).status.success());
    ok(&["eval", "--scores", &s.p("maps/test_mf.hdr"), "--mask", &mask_hdr, "--out", &s.p("eval")]);
    let map_hdr = s.root.join("maps/test_mf.hdr");
    let header = envi::read_header_file(&map_hdr).unwrap();
    let map = envi::read_scoremap(
        &header,
        &mut fs::File::open(envi::raster_path_for(&map_hdr).unwrap()).unwrap(),
    )
    .unwrap();
    let ev = hsdetect::evaluate(&map, &mask.crop(map.region()).unwrap()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.root.join("eval/test_mf_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["auc"].as_f64().unwrap(), ev.summary.auc);
    assert_eq!(summary["ap"].as_f64().unwrap(), ev.summary.ap);
    let roc = fs::read_to_string(s.root.join("eval/test_mf_roc.csv")).unwrap();
    assert_eq!(roc, hsdetect::metrics::curve_csv(&ev.roc, "fpr", "tpr"));
    for f in ["full_ace_roc.svg", "full_ace_pr.svg", "full_ace_roc_log.csv", "test_mf_pr.csv"] {
        assert!(s.root.join("eval").join(f).is_file(), "{f}");
    }
    assert!(!s.root.join("eval/test_mf_roc.svg").exists());
}

fn write_summary(dir: &Path, name: &str, method: &str, region: &str, ap: f64, auc: f64) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(r#"{{"method":"{method}","region":"{region}","auc":{auc},"ap":{ap},"positives":5,"negatives":50}}"#),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn report_renders_missing_cells_and_prefers_later_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let files = [
        write_summary(d, "a.json", "nn", "test", 0.814, 0.982),
        write_summary(d, "b.json", "ace", "full", 0.163, 0.998),
        write_summary(d, "c.json", "ace", "test", 0.5, 0.9),
        write_summary(d, "d.json", "ace", "test", 0.691, 0.989),
    ];
    let csv = d.join("t.csv").to_string_lossy().into_owned();
    let mut args: Vec<&str> = vec!["report"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--csv", &csv]);
    let out = ok(&args);
    let table = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].contains("test AP") && lines[0].contains("full AUC"), "{table}");
    assert!(lines[2].starts_with("ACE") && lines[3].starts_with("NN"), "{table}");
    assert!(lines[3].contains("--"), "{table}");
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        "method,test_ap,test_auc,full_ap,full_auc\nace,0.691,0.989,0.163,0.998\nnn,0.814,0.982,--,--\n"
    );

    let bad = d.join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let out = run(&["report", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_every_flag() {
    let top = String::from_utf8_lossy(&ok(&["--help"]).stdout).into_owned();
    for word in ["detect", "train-nn", "score-nn", "eval", "synth", "report", "--seed", "--parallel"] {
        assert!(top.contains(word), "{word}");
    }
    let detect = String::from_utf8_lossy(&ok(&["detect", "--help"]).stdout).into_owned();
    for flag in [
        "--cube", "--signature", "--method", "--region", "--window", "--regions",
        "--background-region", "--centered-cem", "--exclude-positives", "--mask", "--out",
    ] {
        assert!(detect.contains(flag), "{flag}");
    }
}

#[test]
fn synth_writes_a_complete_scene() {
    let s = Scene::new(16);
    assert_eq!(
        listing(&s.root.join("scene")),
        ["cube.hdr", "cube.img", "mask.hdr", "mask.img", "regions.txt", "signature.csv", "synth.json"]
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.root.join("scene/synth.json")).unwrap()).unwrap();
    assert!((meta["deflection"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    assert_eq!(meta["split"], 20);
    let regions = fs::read_to_string(s.root.join("scene/regions.txt")).unwrap();
    assert!(regions.contains("region test 0 20 40 20"), "{regions}");

    let out = ok(&["synth", "--out", &s.p("thin"), "--lines", "40", "--samples", "40", "--bands", "6", "--targets", "20"]);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.root.join("thin/synth.json")).unwrap()).unwrap();
    assert_eq!(meta["abundance"], 1.0);
    assert!(meta["deflection"].as_f64().unwrap() < 6.0);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boundkit::bench::nms_thin;
use boundkit::dataset::write_item;
use boundkit::imagecore::io::{read_bmap, read_png, write_bmap, write_mask_png};
use boundkit::imagecore::{AnnotationSet, ImageGrid, Mask};
use boundkit::ncuts::{fuse_spectral, NcutsConfig};
use boundkit::net::read_checkpoint;
use boundkit::pipeline::{detect, spectral_of_pb};
use tempfile::TempDir;

fn boundkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boundkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = boundkit(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic(dir: &Path, count: u64) {
    ok(&["gen-synthetic", "--count", &count.to_string(), "--out", s(dir)]);
}

fn loss_rows(csv: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn train_one_epoch_writes_checkpoint_and_one_loss_row() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("run");
    synthetic(&data, 2);
    ok(&["train", "--data", s(&data), "--epochs", "1", "--out", s(&out)]);
    assert!(out.join("model.bnet").is_file());
    assert!(out.join("checkpoints/epoch_001.bnet").is_file());
    assert_eq!(loss_rows(&out.join("loss.csv")).len(), 1);
    let manifest = std::fs::read_to_string(out.join("train.manifest.json")).unwrap();
    assert!(manifest.contains("config_sha256") && manifest.contains("model.bnet"));
}

#[test]
fn train_is_bit_identical_per_seed() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synthetic(&data, 3);
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&["train", "--data", s(&data), "--epochs", "2", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("model.bnet")).unwrap()
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn synthetic_training_halves_the_loss() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("run");
    synthetic(&data, 24);
    ok(&["train", "--data", s(&data), "--epochs", "15", "--out", s(&out)]);
    let rows = loss_rows(&out.join("loss.csv"));
    let (first, last) = (rows[0][4], rows[rows.len() - 1][4]);
    assert!(last < 0.5 * first, "total loss {first} -> {last}");
}

#[test]
fn malformed_dataset_names_the_file() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synthetic(&data, 1);
    let bad = data.join("images/syn_00000.png");
    std::fs::write(&bad, b"not a png").unwrap();
    let o = boundkit(&["train", "--data", s(&data), "--epochs", "1", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("syn_00000"));
}

struct Trained {
    tmp: TempDir,
    model: PathBuf,
    image: PathBuf,
}

fn trained() -> Trained {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synthetic(&data, 2);
    let run = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--epochs", "2", "--out", s(&run)]);
    Trained {
        model: run.join("model.bnet"),
        image: data.join("images/syn_00000.png"),
        tmp,
    }
}

fn map(dir: &Path, kind: &str) -> ImageGrid<f64> {
    read_bmap(dir.join(kind).join("syn_00000.bmap")).unwrap()
}

#[test]
fn detect_without_spectral_passes_pb_through() {
    let t = trained();
    let out = t.tmp.path().join("det");
    ok(&["detect", "--checkpoint", s(&t.model), "--image", s(&t.image), "--out", s(&out)]);
    assert_eq!(map(&out, "pb"), map(&out, "fused"));
    assert!(!out.join("spb").exists());
}

#[test]
fn detect_is_byte_stable() {
    let t = trained();
    let run = |name: &str| {
        let out = t.tmp.path().join(name);
        ok(&["detect", "--checkpoint", s(&t.model), "--image", s(&t.image), "--gamma", "0.3", "--out", s(&out)]);
        ["pb", "spb", "fused", "thin"]
            .iter()
            .flat_map(|d| ["bmap", "png"].map(|e| std::fs::read(out.join(d).join(format!("syn_00000.{e}"))).unwrap()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn detect_stages_match_library_calls() {
    let t = trained();
    let out = t.tmp.path().join("det");
    ok(&["detect", "--checkpoint", s(&t.model), "--image", s(&t.image), "--gamma", "0.3", "--out", s(&out)]);
    let params = read_checkpoint::<f64>(&t.model).unwrap();
    let img: ImageGrid<f64> = read_png(&t.image).unwrap();
    let pb = detect(&params, &img, 1.0).unwrap();
    let spb = spectral_of_pb(&pb, &NcutsConfig::default()).unwrap().spb;
    let fused = fuse_spectral(&pb, &spb, 0.3).unwrap();
    assert_eq!(map(&out, "pb"), pb);
    assert_eq!(map(&out, "spb"), spb);
    assert_eq!(map(&out, "thin"), nms_thin(&fused));
    assert_eq!(map(&out, "fused"), fused);
}

#[test]
fn detect_rejects_architecture_mismatch() {
    let t = trained();
    let o = boundkit(&[
        "detect",
        "--checkpoint",
        s(&t.model),
        "--image",
        s(&t.image),
        "--scales",
        "2",
        "--out",
        s(&t.tmp.path().join("det")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("architecture"));
}

/// 16x16, one annotator tracing row 8 from x=2 to x=13.
fn toy_annotation() -> AnnotationSet {
    let line = Mask::from_fn(16, 16, |x, y| y == 8 && (2..14).contains(&x)).unwrap();
    AnnotationSet::new(16, 16, vec![line], None).unwrap()
}

#[test]
fn eval_of_ground_truth_copy_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    let ann = toy_annotation();
    write_item(&data, "toy", &ImageGrid::zeros(16, 16, 1).unwrap(), &ann).unwrap();
    write_mask_png(&ann.annotators()[0], pred.join("toy.png")).unwrap();
    let out = tmp.path().join("eval");
    ok(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", s(&out)]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().nth(1).unwrap(), "pred,1.000000,0.01,1.000000,1.000000");
}

#[test]
fn eval_matches_hand_counted_golden_csv() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    write_item(&data, "toy", &ImageGrid::zeros(16, 16, 1).unwrap(), &toy_annotation()).unwrap();
    // strong left half, weak right half, one stray pixel in between
    let pb = ImageGrid::from_fn(16, 16, |x, y| match (x, y) {
        (2..=7, 8) => 0.905,
        (8..=13, 8) => 0.305,
        (2, 2) => 0.605,
        _ => 0.0,
    })
    .unwrap();
    write_bmap(&pb, pred.join("toy.bmap")).unwrap();
    let out = tmp.path().join("eval");
    ok(&["eval", "--pred", s(&pred), "--gt", s(&data), "--name", "toy", "--out", s(&out)]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for f in ["dataset.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read_to_string(out.join(f)).unwrap(),
            std::fs::read_to_string(golden.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        std::fs::read(out.join("curves/toy.csv")).unwrap(),
        std::fs::read(golden.join("dataset.csv")).unwrap()
    );
    assert!(std::fs::read_to_string(out.join("pr.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn eval_errors_on_empty_or_unmatched_predictions() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    write_item(&data, "toy", &ImageGrid::zeros(16, 16, 1).unwrap(), &toy_annotation()).unwrap();
    let out = s(&tmp.path().join("eval")).to_string();
    let o = boundkit(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));

    write_mask_png(&Mask::empty(16, 16).unwrap(), pred.join("other.png")).unwrap();
    let o = boundkit(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("other") && err.contains("toy"), "{err}");
}

#[test]
fn gradcheck_passes_and_reports_groups() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("gc");
    let o = ok(&["gradcheck", "--seeds", "2", "--out", s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max_rel_err") && text.trim_end().lines().last().unwrap().starts_with("PASS"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn corrupted_gradient_fails_with_numerical_exit_code() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("gc");
    let o = boundkit(&["gradcheck", "--seeds", "1", "--corrupt", "0.01", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert!(out.join("gradcheck.manifest.json").is_file());
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let out = s(&tmp.path().join("o")).to_string();
    let o = boundkit(&["gen-synthetic", "--config", s(&cfg), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch"));

    std::fs::write(&cfg, "[bench]\ntol_frac = -1.0\n").unwrap();
    assert_eq!(boundkit(&["gen-synthetic", "--config", s(&cfg), "--out", &out]).status.code(), Some(1));
    assert_eq!(boundkit(&["detect", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(boundkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_values_apply_and_flags_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    let out = tmp.path().join("o");
    std::fs::write(&cfg, format!("seed = 3\n[synthetic]\nwidth = 20\nheight = 12\n[paths]\nout = {:?}\n", s(&out))).unwrap();
    ok(&["gen-synthetic", "--count", "1", "--config", s(&cfg), "--seed", "9"]);
    let img: ImageGrid<f64> = read_png(out.join("images/syn_00000.png")).unwrap();
    assert_eq!(img.dims(), (20, 12));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("gen-synthetic.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["synthetic"]["width"], 20);
}

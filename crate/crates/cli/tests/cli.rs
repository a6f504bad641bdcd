use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn irmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irmrf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = irmrf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap().to_string();
    assert!(line.starts_with("error kind="), "{line}");
    line
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// (delta, hit_rate, fa_per_frame) rows of a ROC CSV.
fn roc_rows(text: &str) -> Vec<(f64, f64, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

fn synth(dir: &Path, scene: &str, seed: &str) -> PathBuf {
    ok(&["synth", "--scene", scene, "--seed", seed, "--out-dir", p(dir)]);
    dir.join("manifest.txt")
}

#[test]
fn planted_true_params_reach_the_operating_point() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = synth(&data, "planted", "2");
    let out = tmp.path().join("det");
    let models = data.join("models");
    ok(&["detect", p(&manifest), "--models", p(&models), "--out-dir", p(&out)]);
    let rows = roc_rows(&read(out.join("roc.csv")));
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().any(|&(_, hit, fa)| hit >= 0.95 && fa <= 1.0));
    assert!(read(out.join("detections.csv")).starts_with("frame_id,x0,y0,w,h,score\n"));
    assert_eq!(std::fs::read_dir(out.join("rho")).unwrap().count(), 20);
    let run = read(out.join("run.txt"));
    assert!(run.contains("command = detect") && run.contains("config_sha256 = "));

    // eval on the stored maps reproduces the ROC
    let ev = tmp.path().join("ev");
    ok(&["eval", p(&manifest), "--maps", p(&out), "--out-dir", p(&ev)]);
    assert_eq!(read(ev.join("roc.csv")), read(out.join("roc.csv")));
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), "planted", "4");
    let models = tmp.path().join("data/models");
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        ok(&["train", p(&manifest), "--seed", "9", "--out-dir", p(&out.join("m"))]);
        ok(&["detect", p(&manifest), "--models", p(&models), "--out-dir", p(&out.join("d"))]);
    }
    for f in ["m/target_sar.txt", "m/background_sar.txt", "m/prior_auto.txt", "m/ablation.txt", "d/roc.csv", "d/detections.csv"] {
        assert_eq!(read(tmp.path().join("a").join(f)), read(tmp.path().join("b").join(f)), "{f}");
    }
    let again = tmp.path().join("again");
    synth(&again, "planted", "4");
    assert_eq!(
        std::fs::read(again.join("frame_0003.pgm")).unwrap(),
        std::fs::read(tmp.path().join("data/frame_0003.pgm")).unwrap()
    );
}

#[test]
fn config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), "planted", "2");
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "models = data/models\nladder = 5\nmin_area = 6\n").unwrap();
    let out = tmp.path().join("det");
    ok(&["detect", p(&manifest), "--config", p(&cfg), "--ladder", "7", "--out-dir", p(&out)]);
    assert_eq!(roc_rows(&read(out.join("roc.csv"))).len(), 7);
    assert!(read(out.join("run.txt")).contains("config.min_area = 6"));
}

#[test]
fn trained_models_drive_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), "planted", "3");
    let models = tmp.path().join("trained");
    let stdout = ok(&["train", p(&manifest), "--seed", "1", "--out-dir", p(&models)]);
    assert!(stdout.starts_with("train frames=20"));
    for variant in ["sar-auto", "sar-i", "i-auto"] {
        let out = tmp.path().join(variant);
        ok(&["detect", p(&manifest), "--models", p(&models), "--variant", variant, "--out-dir", p(&out)]);
        assert!(out.join("roc.csv").is_file());
    }
}

#[test]
fn fusion_removes_the_static_distractor() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("seq"), "sequence", "5");
    let models = tmp.path().join("seq/models");
    let out = tmp.path().join("fuse");
    ok(&["fuse", p(&manifest), "--models", p(&models), "--out-dir", p(&out)]);
    let table = read(out.join("fuse_table.csv"));
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    let num = |i: usize| row[i].parse::<f64>().unwrap();
    assert_eq!(row[0], "sar-auto");
    assert!(num(4) > 0.0, "{table}");
    assert_eq!(num(5), 100.0);
    assert_eq!(num(6), 0.0);

    let clean = synth(&tmp.path().join("clean"), "clean-sequence", "5");
    let out = tmp.path().join("fuse-clean");
    ok(&["fuse", p(&clean), "--models", p(&tmp.path().join("clean/models")), "--out-dir", p(&out)]);
    let table = read(out.join("fuse_table.csv"));
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], row[5], "{table}");
}

#[test]
fn fusion_needs_two_frames() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--scene", "sequence", "--frames", "1", "--out-dir", p(tmp.path())]);
    let out = irmrf(&[
        "fuse",
        p(&tmp.path().join("manifest.txt")),
        "--models",
        p(&tmp.path().join("models")),
        "--out-dir",
        p(&tmp.path().join("f")),
    ]);
    assert!(error_line(&out).starts_with("error kind=too_few_frames"));
}

#[test]
fn degenerate_training_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(tmp.path(), "planted", "1");
    for i in 0..20 {
        std::fs::write(tmp.path().join(format!("frame_{i:04}.csv")), "").unwrap();
    }
    let out = irmrf(&["train", p(&manifest), "--out-dir", p(&tmp.path().join("m"))]);
    assert!(error_line(&out).starts_with("error kind=degenerate_labels"));
}

#[test]
fn failures_print_one_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = irmrf(&["detect", "missing.txt", "--models", "m", "--out-dir", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).starts_with("error kind=missing_file"));

    let manifest = synth(&tmp.path().join("data"), "planted", "1");
    let out = irmrf(&["detect", p(&manifest), "--out-dir", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error kind=config"));

    let out = irmrf(&["detect", p(&manifest), "--models", p(&tmp.path().join("nowhere")), "--out-dir", p(tmp.path())]);
    assert!(error_line(&out).starts_with("error kind=missing_file"));

    let models = tmp.path().join("data/models");
    let out = irmrf(&["detect", p(&manifest), "--models", p(&models), "--ladder", "0", "--out-dir", p(tmp.path())]);
    assert!(error_line(&out).contains("ladder"));

    let out = irmrf(&["detect", p(&manifest), "--models", p(&models), "--variant", "sar-i", "--out-dir", p(tmp.path())]);
    assert!(error_line(&out).contains("ablation.txt"));

    let out = irmrf(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error kind=usage"));
}

#[test]
fn eval_rejects_mismatched_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let planted = synth(&tmp.path().join("planted"), "planted", "1");
    let seq = synth(&tmp.path().join("seq"), "sequence", "1");
    let det = tmp.path().join("det");
    ok(&["detect", p(&planted), "--models", p(&tmp.path().join("planted/models")), "--out-dir", p(&det)]);
    let out = irmrf(&["eval", p(&seq), "--maps", p(&det), "--out-dir", p(&tmp.path().join("ev"))]);
    assert!(error_line(&out).starts_with("error kind=dimension_mismatch"));
}

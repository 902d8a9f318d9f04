use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cnm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnm")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const TINY: &str = "dims = 3,16,16,1\nepochs_per_frame = 2\nfirst_frame_epochs = 3\nbatch_size = 32\n\
                    frame_stride = 1\npixel_stride = 8\nseed = 5\n";

fn synth(dir: &Path, frames: usize) -> PathBuf {
    let data = dir.join("data");
    let n = frames.to_string();
    ok(&cnm(&["synth", "--scene", s(&scenes().join("sphere.txt")), "--frames", &n, "--traj", "orbit", "--out", s(&data)]));
    data
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("tiny.cfg");
    fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

#[test]
fn synth_writes_frames_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4);
    for i in 0..4 {
        assert!(data.join(format!("depth_{i:04}.png")).exists());
    }
    let manifest = fs::read_to_string(data.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("depth_0")).count(), 4);
    let first = fs::read(data.join("depth_0002.png")).unwrap();
    let again = dir.path().join("again");
    ok(&cnm(&["synth", "--scene", s(&scenes().join("sphere.txt")), "--frames", "4", "--out", s(&again)]));
    assert_eq!(fs::read(again.join("depth_0002.png")).unwrap(), first);
    assert_eq!(fs::read_to_string(again.join("manifest.txt")).unwrap().replace(s(&again), ""), manifest.replace(s(&data), ""));
}

#[test]
fn synth_zero_frames() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 0);
    let manifest = fs::read_to_string(data.join("manifest.txt")).unwrap();
    assert!(!manifest.lines().any(|l| l.starts_with("depth_0")));
}

#[test]
fn bundled_room_matches_library_scene() {
    let text = fs::read_to_string(scenes().join("room.txt")).unwrap();
    assert_eq!(cnm_core::scene::SyntheticScene::parse(&text).unwrap(), cnm_core::scene::box_room());
}

#[test]
fn train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let cfg = tiny_config(dir.path(), "");
    let out = dir.path().join("run");
    ok(&cnm(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]));
    for t in 0..3 {
        assert!(out.join(format!("theta_{t:04}.cnm")).exists());
    }
    assert!(out.join("losses.csv").exists() && out.join("config.txt").exists());

    let again = dir.path().join("run2");
    ok(&cnm(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&again)]));
    for t in 0..3 {
        let name = format!("theta_{t:04}.cnm");
        assert_eq!(fs::read(out.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap());
    }

    let heat = dir.path().join("heat.csv");
    ok(&cnm(&["heatmap", "--ckpts", s(&out), "--data", s(&data), "--out", s(&heat)]));
    let rows = fs::read_to_string(&heat).unwrap();
    assert_eq!(rows.lines().count(), 1 + 9);
    assert!(rows.starts_with("frame,checkpoint,"));

    let curve = dir.path().join("forget.csv");
    ok(&cnm(&["forget", "--ckpts", s(&out), "--data", s(&data), "--out", s(&curve)]));
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 4);

    let ply = dir.path().join("mesh.ply");
    ok(&cnm(&["mesh", "--ckpts", s(&out), "--data", s(&data), "--res", "16", "--mask", "--out", s(&ply)]));
    assert!(fs::read_to_string(&ply).unwrap().starts_with("ply\n"));

    let pgm = dir.path().join("slice.pgm");
    ok(&cnm(&["slice", "--ckpts", s(&out), "--data", s(&data), "--res", "20", "--axis", "z", "--out", s(&pgm)]));
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5\n20 20\n65535\n"));
    assert!(dir.path().join("slice.csv").exists());
}

#[test]
fn one_frame_one_checkpoint_and_retrain_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let cfg = tiny_config(dir.path(), "");
    let out = dir.path().join("retrain");
    ok(&cnm(&["baseline", "--mode", "retrain", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]));
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    let sizes: Vec<usize> = timing.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(sizes.len(), 3);
    assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");

    let one = dir.path().join("one");
    let single = synth(&one, 1);
    let run = one.join("run");
    ok(&cnm(&["train", "--config", s(&cfg), "--data", s(&single), "--out", s(&run)]));
    let n = fs::read_dir(&run).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "cnm")).count();
    assert_eq!(n, 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cnm(&["train", "--config", "/nonexistent.cfg", "--data", "/nope", "--out", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent.cfg"));
    assert_eq!(cnm(&["train", "--bogus-flag"]).status.code(), Some(2));

    let data = synth(dir.path(), 1);
    let cfg = tiny_config(dir.path(), "learning_rate = 1e300\n");
    let out = cnm(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("boom"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dims_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let cfg = tiny_config(dir.path(), "");
    let out = dir.path().join("run");
    ok(&cnm(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]));
    let other = dir.path().join("other.cfg");
    fs::write(&other, TINY.replace("3,16,16,1", "3,8,1")).unwrap();
    let r = cnm(&["heatmap", "--ckpts", s(&out), "--data", s(&data), "--config", s(&other), "--out", s(&dir.path().join("h.csv"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn masked_mesh_without_observations_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let cfg = tiny_config(dir.path(), "");
    let out = dir.path().join("run");
    ok(&cnm(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]));
    // blank out the depth image
    let png = data.join("depth_0000.png");
    let blank = tempfile::tempdir().unwrap();
    let empty = blank.path().join("empty.png");
    write_zero_png(&empty, 80, 60);
    fs::copy(&empty, &png).unwrap();
    let ply = dir.path().join("m.ply");
    let r = cnm(&["mesh", "--ckpts", s(&out), "--data", s(&data), "--mask", "--res", "12", "--out", s(&ply)]);
    ok(&r);
    assert!(String::from_utf8_lossy(&r.stderr).contains("empty"));
    assert!(fs::read_to_string(&ply).unwrap().contains("element face 0\n"));
}

fn write_zero_png(path: &Path, w: usize, h: usize) {
    cnm_core::scene::write_depth_png(path, w, h, &vec![0u16; w * h]).unwrap();
}

#[test]
fn help_lists_flags() {
    let out = cnm(&["mesh", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--ckpts", "--data", "--config", "--out", "--mask", "--res", "--voxel-cells"] {
        assert!(text.contains(flag), "{flag} missing");
    }
    let top = String::from_utf8_lossy(&cnm(&["--help"]).stdout).to_string();
    for cmd in ["synth", "train", "baseline", "heatmap", "forget", "mesh", "slice", "CNM_THREADS"] {
        assert!(top.contains(cmd), "{cmd} missing");
    }
}

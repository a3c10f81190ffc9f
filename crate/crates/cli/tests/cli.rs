use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgcr_core::io::{gaussians_to_ply, points_from_text};
use sgcr_core::SphericalGaussianSet;

const TINY: &str = r#"
seed = 3
out_dir = "run"
[scene]
source = "synthetic"
model = { kind = "cube", center = [0.5, 0.5, 0.5], side = 0.4 }
rig = { views = 6, width = 64, height = 64 }
[train]
grid_resolution = 10
r0 = 0.01
phase_iters = [80, 40]
densify_interval = 20
opacity_reset_interval = 80
densify_grad_threshold = 1e-3
lr_opacity = 0.1
lr_position_init = 1e-3
[extract]
n_searches = 4
inner_iters = 20
global_iters = 30
"#;

fn sgcr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgcr"))
        .args(args)
        .current_dir(dir)
        .env("SGCR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn synth_writes_views_and_is_repeatable() {
    let (dir, _) = setup();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    let edges = dir.path().join("run/scene/edges");
    assert_eq!(std::fs::read_dir(&edges).unwrap().count(), 6);
    let first: Vec<Vec<u8>> = ["run/scene/cameras.json", "run/scene/gt_points.txt", "run/scene/edges/view_005.pgm"]
        .iter()
        .map(|p| read(dir.path().join(p)))
        .collect();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    let second: Vec<Vec<u8>> = ["run/scene/cameras.json", "run/scene/gt_points.txt", "run/scene/edges/view_005.pgm"]
        .iter()
        .map(|p| read(dir.path().join(p)))
        .collect();
    assert_eq!(first, second);
}

#[test]
fn pipeline_is_deterministic() {
    let (dir, _) = setup();
    let out = sgcr(dir.path(), &["pipeline", "-c", "tiny.toml", "--out", "a"]);
    ok(&out);
    ok(&sgcr(dir.path(), &["pipeline", "-c", "tiny.toml", "--out", "b"]));
    for f in ["train/gaussians.ply", "train/log.csv", "extract/curves.json", "eval/report.json", "eval/summary.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let report = String::from_utf8(read(dir.path().join("a/eval/report.json"))).unwrap();
    assert!(report.contains("\"fscore\""));
    assert!(dir.path().join("a/eval/contact_sheet.pgm").exists());
    assert!(dir.path().join("a/train/phase1.ply").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final count"));
    assert!(stdout.contains("curves"));
}

#[test]
fn seed_flag_changes_the_run() {
    let (dir, _) = setup();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    ok(&sgcr(dir.path(), &["train", "-c", "tiny.toml"]));
    let a = read(dir.path().join("run/train/gaussians.ply"));
    ok(&sgcr(dir.path(), &["train", "-c", "tiny.toml", "--seed", "4"]));
    let b = read(dir.path().join("run/train/gaussians.ply"));
    assert_ne!(a, b);
}

#[test]
fn resume_matches_uninterrupted_training() {
    let (dir, _) = setup();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    ok(&sgcr(dir.path(), &["train", "-c", "tiny.toml"]));
    let full = read(dir.path().join("run/train/gaussians.ply"));
    std::fs::copy(dir.path().join("run/train/phase1.ply"), dir.path().join("p1.ply")).unwrap();
    std::fs::remove_file(dir.path().join("run/train/gaussians.ply")).unwrap();
    ok(&sgcr(dir.path(), &["train", "-c", "tiny.toml", "--resume", "p1.ply"]));
    assert_eq!(read(dir.path().join("run/train/gaussians.ply")), full);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let (dir, _) = setup();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    ok(&sgcr(
        dir.path(),
        &["eval", "-c", "tiny.toml", "--pred-points", "run/scene/gt_points.txt"],
    ));
    let summary = String::from_utf8(read(dir.path().join("run/eval/summary.csv"))).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[1..6], &["0.000000", "1.000000", "1.000000", "1.000000", "1.000000"]);
    let gt = points_from_text(&String::from_utf8(read(dir.path().join("run/scene/gt_points.txt"))).unwrap()).unwrap();
    assert_eq!(row[7], gt.len().to_string());
}

#[test]
fn empty_checkpoint_is_too_few_gaussians() {
    let (dir, _) = setup();
    let ck = dir.path().join("run/train/gaussians.ply");
    std::fs::create_dir_all(ck.parent().unwrap()).unwrap();
    std::fs::write(&ck, gaussians_to_ply(&SphericalGaussianSet::new(0.005))).unwrap();
    let out = sgcr(dir.path(), &["extract", "-c", "tiny.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too few gaussians"));
}

#[test]
fn failures_map_to_exit_codes() {
    let (dir, _) = setup();
    std::fs::write(dir.path().join("bad.toml"), "[train]\nlambda9 = 1\n").unwrap();
    assert_eq!(sgcr(dir.path(), &["synth", "-c", "bad.toml"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad2.toml"), "[train]\ngrid_resolution = 1\n").unwrap();
    assert_eq!(sgcr(dir.path(), &["synth", "-c", "bad2.toml"]).status.code(), Some(2));
    let missing = sgcr(dir.path(), &["train", "-c", "tiny.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("train: missing input"));
    let missing = sgcr(dir.path(), &["extract", "-c", "tiny.toml"]);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("extract: missing input"));
    // a rig whose views never see an edge pixel
    std::fs::write(
        dir.path().join("blank.toml"),
        TINY.replace("rig = { views = 6, width = 64, height = 64 }", "rig = { views = 6, width = 64, height = 64, fov_deg = 1.0, target = [0.05, 0.05, 0.05] }"),
    )
    .unwrap();
    ok(&sgcr(dir.path(), &["synth", "-c", "blank.toml"]));
    let out = sgcr(dir.path(), &["train", "-c", "blank.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn external_scene_reads_synthesized_files() {
    let (dir, _) = setup();
    ok(&sgcr(dir.path(), &["synth", "-c", "tiny.toml"]));
    let ext = TINY.replace(
        "source = \"synthetic\"\nmodel = { kind = \"cube\", center = [0.5, 0.5, 0.5], side = 0.4 }\nrig = { views = 6, width = 64, height = 64 }",
        "source = \"external\"\ncameras = \"run/scene/cameras.json\"\nedge_map_dir = \"run/scene/edges\"\ngt_points = \"run/scene/gt_points.txt\"",
    );
    assert!(ext.contains("external"));
    std::fs::write(dir.path().join("ext.toml"), ext.replace("out_dir = \"run\"", "out_dir = \"ext\"")).unwrap();
    ok(&sgcr(dir.path(), &["train", "-c", "ext.toml"]));
    ok(&sgcr(dir.path(), &["train", "-c", "tiny.toml"]));
    assert_eq!(
        read(dir.path().join("ext/train/gaussians.ply")),
        read(dir.path().join("run/train/gaussians.ply"))
    );
    assert_eq!(sgcr(dir.path(), &["synth", "-c", "ext.toml"]).status.code(), Some(2));
}

#[test]
fn shipped_configs_synthesize() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let out = sgcr(dir.path(), &["synth", "-c", path.to_str().unwrap(), "--out", "o"]);
        ok(&out);
        assert_eq!(std::fs::read_dir(dir.path().join("o/scene/edges")).unwrap().count(), 30, "{}", path.display());
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use image::{Rgb, RgbImage, Rgba, RgbaImage};

const BIN: &str = env!("CARGO_BIN_EXE_sprite-gan");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("SPRITE_RUNS_DIR", dir.join("runs"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert_eq!(code(&o), 0, "{args:?}\nstdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    o
}

#[test]
fn every_subcommand_has_help_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["prepare", "synth", "train", "evaluate", "translate", "study"] {
        let o = ok(dir.path(), &[sub, "--help"]);
        assert!(stdout(&o).contains("--seed"), "{sub} lacks --seed");
    }
}

#[test]
fn train_help_shows_reference_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&ok(dir.path(), &["train", "--help"]));
    for flag in [
        ("--steps", "40000"),
        ("--lr", "0.0002"),
        ("--beta1", "0.5"),
        ("--beta2", "0.999"),
        ("--batch-size", "1"),
        ("--patch-size", "2"),
        ("--channels", "4"),
        ("--lambda-l1", "100"),
        ("--split-ratio", "0.85"),
    ] {
        let at = help.find(&format!("{} <", flag.0)).unwrap_or_else(|| panic!("{} missing", flag.0));
        let rest = &help[at..];
        let default = rest.find("[default: ").expect("has default");
        let value = &rest[default + 10..];
        assert!(value.starts_with(&format!("{}]", flag.1)), "{}: {}", flag.0, &value[..10]);
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["synth", "--out", "x", "--bogus"])), 2);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 2);
    ok(dir.path(), &["synth", "--out", "d", "--characters", "3"]);
    let same = run(dir.path(), &["train", "--data", "d", "--run-id", "r", "--source-pose", "front", "--target-pose", "front"]);
    assert_eq!(code(&same), 2, "{}", stderr(&same));
    let bad_pose = run(dir.path(), &["train", "--data", "d", "--run-id", "r", "--source-pose", "up"]);
    assert_eq!(code(&bad_pose), 2);
    let bad_patch = run(dir.path(), &["train", "--data", "d", "--run-id", "r", "--patch-size", "7"]);
    assert_eq!(code(&bad_patch), 2, "{}", stderr(&bad_patch));
}

#[test]
fn missing_resources_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["train", "--data", "nowhere", "--run-id", "r", "--steps", "1"])), 3);
    assert_eq!(code(&run(dir.path(), &["evaluate", "--run-id", "ghost"])), 3);
    assert_eq!(code(&run(dir.path(), &["translate", "--run-id", "ghost", "--input", "a.png", "--out", "o"])), 3);
    assert_eq!(code(&run(dir.path(), &["study", "no-such-spec.toml"])), 3);
}

/// A sheet of 4 pose rows by 3 frame columns, 16x16 cells, with a distinct
/// colored block per cell on a transparent background.
fn write_sheet(path: &Path, hue: u8) {
    let img = RgbaImage::from_fn(48, 64, |x, y| {
        let (col, row) = (x / 16, y / 16);
        if (4..12).contains(&(x % 16)) && (2..14).contains(&(y % 16)) {
            Rgba([hue, 40 * row as u8, 60 * col as u8, 255])
        } else {
            Rgba([0, 0, 0, 0])
        }
    });
    img.save(path).unwrap();
}

const DESCRIPTOR: &str = r#"
name = "fixture"
layout = "sheets"
files = ["hero.png", "mage.png"]
cell_width = 16
cell_height = 16
rows = 4
columns = 3
"#;

#[test]
fn prepare_counts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_sheet(&d.join("hero.png"), 200);
    write_sheet(&d.join("mage.png"), 90);
    fs::write(d.join("data.toml"), DESCRIPTOR).unwrap();
    let o = ok(d, &["prepare", "data.toml", "--out", "prepared"]);
    assert!(stdout(&o).contains("24 sprites, 2 characters"), "{}", stdout(&o));
    let manifest = fs::read_to_string(d.join("prepared/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2 * 12);
    ok(d, &["prepare", "data.toml", "--out", "prepared"]);
    assert_eq!(fs::read_to_string(d.join("prepared/manifest.jsonl")).unwrap(), manifest);
}

#[test]
fn prepare_reports_bad_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Syntax error on line 3.
    fs::write(d.join("broken.toml"), "name = \"x\"\nlayout = \"sheets\"\nrows = = 4\n").unwrap();
    let o = run(d, &["prepare", "broken.toml", "--out", "p"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(d.join("typo.toml"), DESCRIPTOR.replace("columns", "colums")).unwrap();
    let o = run(d, &["prepare", "typo.toml", "--out", "p"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colums"), "{}", stderr(&o));

    // Listed files that do not exist are all named.
    fs::write(d.join("data.toml"), DESCRIPTOR).unwrap();
    let o = run(d, &["prepare", "data.toml", "--out", "p"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("hero.png") && stderr(&o).contains("mage.png"), "{}", stderr(&o));

    // An RGB sheet needs a declared key color.
    RgbImage::from_pixel(48, 64, Rgb([255, 0, 255])).save(d.join("hero.png")).unwrap();
    RgbImage::from_pixel(48, 64, Rgb([255, 0, 255])).save(d.join("mage.png")).unwrap();
    let o = run(d, &["prepare", "data.toml", "--out", "p"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    fs::write(d.join("keyed.toml"), format!("{DESCRIPTOR}key_color = [255, 0, 255]\n")).unwrap();
    ok(d, &["prepare", "keyed.toml", "--out", "p"]);
}

#[test]
fn short_training_run_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--characters", "20", "--seed", "4"]);
    let started = Instant::now();
    ok(d, &["train", "--data", "data", "--steps", "100", "--run-id", "smoke", "--seed", "1"]);
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "100 steps took {secs:.1}s");
    let metrics = fs::read_to_string(d.join("runs/smoke/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 101);
    assert!(d.join("runs/smoke/ckpt-100/generator.bin").is_file());

    // Rerunning without --resume would clobber the run.
    assert_eq!(code(&run(d, &["train", "--data", "data", "--steps", "100", "--run-id", "smoke"])), 2);
    // Resuming extends it.
    ok(d, &["train", "--data", "data", "--steps", "110", "--run-id", "smoke", "--seed", "1", "--resume"]);
    let metrics = fs::read_to_string(d.join("runs/smoke/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 111);
}

#[test]
fn rgb_flag_builds_three_channel_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--characters", "4"]);
    ok(d, &["train", "--data", "data", "--steps", "2", "--run-id", "rgb", "--channels", "3"]);
    let spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("runs/rgb/ckpt-2/generator.json")).unwrap()).unwrap();
    assert_eq!(spec["input"], serde_json::json!([3, 64, 64]));
    assert_eq!(spec["output"], serde_json::json!([3, 64, 64]));
    let out = ok(d, &["translate", "--run-id", "rgb", "--input", "data/synth-0000/front_0.png", "--out", "o"]);
    assert!(stdout(&out).contains("front_0.png"));
    let img = image::open(d.join("o/front_0.png")).unwrap().to_rgba8();
    assert!(img.pixels().all(|p| p.0[3] == 255), "RGB output is opaque");
}

#[test]
fn evaluate_oracle_and_tiny_split() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // 20 characters split 17/3.
    ok(d, &["synth", "--out", "data", "--characters", "20"]);
    ok(d, &["train", "--data", "data", "--steps", "1", "--run-id", "r"]);
    let o = ok(d, &["evaluate", "--run-id", "r", "--oracle"]);
    assert!(stdout(&o).contains("| train | 17 | 0.000000 |"), "{}", stdout(&o));
    assert!(stdout(&o).contains("| test | 3 | 0.000000 |"), "{}", stdout(&o));
    let o = ok(d, &["evaluate", "--run-id", "r"]);
    assert!(d.join("runs/r/eval-1.json").is_file());
    assert!(d.join("runs/r/figures/eval-1.png").is_file());
    assert!(!stdout(&o).contains("| test | 3 | 0.000000 |"));

    // 7 characters split 6/1: FID is undefined on one sample.
    ok(d, &["synth", "--out", "seven", "--characters", "7"]);
    ok(d, &["train", "--data", "seven", "--steps", "1", "--run-id", "s"]);
    let o = run(d, &["evaluate", "--run-id", "s"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn mae(a: &RgbaImage, b: &RgbaImage) -> f64 {
    let sum: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as f64 - y as f64).abs() / 127.5)
        .sum();
    sum / a.as_raw().len() as f64
}

fn sources(d: &Path, data: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(d.join(data))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| p.join("front_0.png"))
        .collect();
    v.sort();
    v
}

#[test]
fn translate_reproduces_training_targets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Three characters all land in the training split.
    ok(d, &["synth", "--out", "data", "--characters", "3", "--seed", "2"]);
    ok(d, &["train", "--data", "data", "--steps", "600", "--run-id", "fit", "--checkpoint-every", "600"]);
    let inputs = sources(d, "data");
    let mut args = vec!["translate", "--run-id", "fit", "--out", "out", "--input"];
    let strs: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    args.extend(strs.iter().map(String::as_str));
    ok(d, &args);
    for input in &inputs {
        let char_dir = input.parent().unwrap();
        let name = format!("{}_front_0.png", char_dir.file_name().unwrap().to_string_lossy());
        let got = image::open(d.join("out").join(&name)).unwrap().to_rgba8();
        let want = image::open(char_dir.join("right_0.png")).unwrap().to_rgba8();
        let err = mae(&got, &want);
        assert!(err < 0.05, "{name}: mean abs error {err:.4}");
    }

    // Same input twice gives identical bytes.
    ok(d, &["translate", "--run-id", "fit", "--out", "again", "--input", &strs[0]]);
    ok(d, &["translate", "--run-id", "fit", "--out", "again2", "--input", &strs[0]]);
    assert_eq!(fs::read(d.join("again/front_0.png")).unwrap(), fs::read(d.join("again2/front_0.png")).unwrap());

    // Undersized inputs are padded, with a warning.
    RgbaImage::from_pixel(32, 24, Rgba([10, 20, 30, 255])).save(d.join("small.png")).unwrap();
    let o = ok(d, &["translate", "--run-id", "fit", "--out", "out", "--input", "small.png"]);
    assert!(stderr(&o).contains("padded"), "{}", stderr(&o));
    assert_eq!(image::open(d.join("out/small.png")).unwrap().to_rgba8().dimensions(), (64, 64));

    // Unreadable input and missing checkpoint.
    fs::write(d.join("junk.png"), b"not a png").unwrap();
    assert_eq!(code(&run(d, &["translate", "--run-id", "fit", "--out", "out", "--input", "junk.png"])), 3);
    assert_eq!(code(&run(d, &["translate", "--ckpt", "runs/fit/ckpt-9", "--out", "out", "--input", "small.png"])), 3);
}

#[test]
fn seeded_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--characters", "5", "--seed", "9"]);
    for id in ["a", "b"] {
        ok(d, &["train", "--data", "data", "--steps", "12", "--run-id", id, "--seed", "3"]);
        ok(d, &["translate", "--run-id", id, "--out", &format!("out-{id}"), "--input", "data/synth-0001/front_0.png"]);
    }
    let losses = |id: &str| -> Vec<String> {
        fs::read_to_string(d.join(format!("runs/{id}/metrics.csv")))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(losses("a"), losses("b"));
    assert_eq!(fs::read(d.join("out-a/front_0.png")).unwrap(), fs::read(d.join("out-b/front_0.png")).unwrap());
}

const STUDY: &str = r#"
name = "tiny"
study = "patch"
datasets = [{ name = "synth", source = { kind = "synthetic", characters = 14, seed = 1 } }]
[train]
steps = 3
checkpoint_every = 3
[evaluation]
grid_rows = 2
baseline = false
"#;

#[test]
fn patch_study_trains_four_models_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("experiments")).unwrap();
    fs::write(d.join("experiments/tiny.toml"), STUDY).unwrap();
    let o = ok(d, &["study", "tiny"]);
    let report = fs::read(d.join("runs/tiny/report.md")).unwrap();
    let text = String::from_utf8(report.clone()).unwrap();
    for p in [2, 5, 11, 64] {
        assert!(text.contains(&format!("| synth | {p} | 4 |")), "{text}");
    }
    assert!(d.join("runs/tiny/figures/patch-sizes.png").is_file());
    let grid = image::open(d.join("runs/tiny/figures/patch-sizes.png")).unwrap();
    assert_eq!(grid.width(), 6 * 64 * 2, "source, target, four models");
    assert!(stdout(&o).contains("report written"));

    // A second invocation reuses every sub-run and writes the same report.
    let started = Instant::now();
    ok(d, &["study", "experiments/tiny.toml"]);
    assert!(started.elapsed().as_secs_f64() < 30.0);
    assert_eq!(fs::read(d.join("runs/tiny/report.md")).unwrap(), report);

    fs::write(d.join("experiments/seven.toml"), STUDY.replace("study = \"patch\"", "study = \"patch\"\npatch_sizes = [7]")).unwrap();
    assert_eq!(code(&run(d, &["study", "seven"])), 2);
}

#[test]
fn dataset_study_skips_missing_data_and_allows_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("empty.toml"),
        "name = \"empty\"\nstudy = \"dataset\"\n",
    )
    .unwrap();
    let o = ok(d, &["study", "empty.toml"]);
    assert!(stdout(&o).contains("No datasets configured"));

    fs::write(
        d.join("gone.toml"),
        r#"
name = "gone"
study = "dataset"
datasets = [{ name = "lost", source = { kind = "prepared", path = "does-not-exist" } }]
"#,
    )
    .unwrap();
    let o = ok(d, &["study", "gone.toml"]);
    assert!(stdout(&o).contains("lost (skipped"), "{}", stdout(&o));
}

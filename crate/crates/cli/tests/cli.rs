//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tilepool::imaging::{read_ppm, write_ppm, Image};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tilepool")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("TILEPOOL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Deterministic noise image written as a PPM file.
fn write_test_ppm(path: &Path, h: usize, w: usize, ch: usize, seed: u64) {
    let mut s = seed | 1;
    let data: Vec<u8> = (0..h * w * ch)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as u8
        })
        .collect();
    let img = Image::new(h, w, ch, data).unwrap();
    fs::write(path, write_ppm(&img)).unwrap();
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn tile_published_grid_writes_thirteen_crops_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 910, 1176, 3, 42);
    let out_dir = dir.path().join("tiles");

    let out = run(&["tile", "--input", input.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().next().unwrap(), "plan 3 4 910 1176");

    let crops: Vec<_> = sorted_files(&out_dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    assert_eq!(crops.len(), 13);

    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("rows 3"));
    assert!(manifest.contains("cols 4"));
    assert!(manifest.contains("s_win 266"));
    assert!(manifest.contains("m_tot 112"));
    assert!(manifest.contains("grid_h 910"));
    assert!(manifest.contains("grid_w 1176"));
    assert!(manifest.contains("crop 000 thumbnail 0 0"));
    assert!(manifest.contains("crop 012 tile 532 798"));

    // Every crop parses and has the base dimensions.
    for crop in &crops {
        let img = read_ppm(&fs::read(crop).unwrap()).unwrap();
        assert_eq!((img.height(), img.width()), (378, 378));
    }
}

#[test]
fn tile_exact_fit_input_writes_two_crops() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 378, 378, 1, 43);
    let out_dir = dir.path().join("tiles");
    let out = run(&["tile", "--input", input.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().next().unwrap(), "plan 1 1 378 378");
    let ppms = sorted_files(&out_dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .count();
    assert_eq!(ppms, 2);
}

#[test]
fn tile_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 500, 700, 3, 44);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = run(&["tile", "--input", input.to_str().unwrap(), "--out-dir", d.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let files_a = sorted_files(&a);
    let files_b = sorted_files(&b);
    assert_eq!(files_a.len(), files_b.len());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.file_name(), fb.file_name());
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{fa:?}");
    }
}

#[test]
fn pipeline_summary_matches_published_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 910, 1176, 3, 45);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "pipeline",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--d-v",
        "4",
        "--d-l",
        "8",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("crops 13"), "{text}");
    assert!(text.contains("n_patches 729"));
    assert!(text.contains("pooled_per_crop 182"));
    assert!(text.contains("patch_tokens 2366"));
    assert!(text.contains("sequence_len 2539")); // 4 + 13 * (182 + 13)

    assert_eq!(fs::read_to_string(out_dir.join("summary.txt")).unwrap(), text);
    let seq = fs::read_to_string(out_dir.join("sequence.txt")).unwrap();
    assert_eq!(seq.split_whitespace().count(), 2539);
    assert!(out_dir.join("pooled.jvf").exists());
}

#[test]
fn pipeline_feature_injection_reproduces_pooled_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 450, 620, 3, 46);
    let (d1, d2) = (dir.path().join("direct"), dir.path().join("injected"));
    let raw = dir.path().join("raw.jvf");

    let out = run(&[
        "pipeline",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        d1.to_str().unwrap(),
        "--save-features",
        raw.to_str().unwrap(),
        "--d-v",
        "4",
        "--d-l",
        "8",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = run(&[
        "pipeline",
        "--features",
        raw.to_str().unwrap(),
        "--out-dir",
        d2.to_str().unwrap(),
        "--d-l",
        "8",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(
        fs::read(d1.join("pooled.jvf")).unwrap(),
        fs::read(d2.join("pooled.jvf")).unwrap()
    );
    assert_eq!(
        fs::read(d1.join("sequence.txt")).unwrap(),
        fs::read(d2.join("sequence.txt")).unwrap()
    );
}

#[test]
fn budget_defaults_print_published_table_values() {
    let out = run(&["budget"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("tokens_unpooled=9477"), "{text}");
    assert!(text.contains("tokens_pooled=2366"));
    assert!(text.contains("reduction_tokens=4.0x"));

    let out = run(&["budget", "--format", "json"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"tokens_unpooled\": 9477"));
}

#[test]
fn gradcheck_passes_with_default_seed() {
    let out = run(&["gradcheck"]);
    assert!(out.status.success(), "stdout: {}", stdout(&out));
    let text = stdout(&out);
    for name in ["w_q", "w_k", "w_v", "w_o", "w_1", "w_2", "w_3", "h_concat"] {
        assert!(text.contains(&format!("{name} ")), "missing {name} in {text}");
    }
    assert!(text.contains("result PASS"));
}

#[test]
fn render_writes_overlay_with_grid_dims() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 378, 378, 1, 47);
    let output = dir.path().join("overlay.ppm");
    let out = run(&[
        "render",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().next().unwrap(), "overlay 378 378");
    let overlay = read_ppm(&fs::read(&output).unwrap()).unwrap();
    assert_eq!((overlay.height(), overlay.width()), (378, 378));
    // Single-tile plan: the outline traces one rectangle.
    assert_eq!(overlay.sample(0, 0, 0), 255);
    assert_eq!(overlay.sample(377, 377, 0), 255);
}

#[test]
fn io_failures_exit_one_and_bad_overrides_exit_two() {
    let out = run(&["tile", "--input", "/nonexistent.ppm", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 16, 16, 1, 48);
    let out = run(&[
        "tile",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        dir.path().join("t").to_str().unwrap(),
        "--base",
        "380", // not a multiple of the patch size
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Corrupt PPM content is an IO/parse failure, not a usage error.
    let bad = dir.path().join("bad.ppm");
    fs::write(&bad, b"P9 nonsense").unwrap();
    let out = run(&["tile", "--input", bad.to_str().unwrap(), "--out-dir", dir.path().join("u").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn pipeline_rejects_single_layer_feature_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 64, 64, 1, 50);
    let first = dir.path().join("first");
    let out = run(&[
        "pipeline",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        first.to_str().unwrap(),
        "--d-v",
        "2",
        "--d-l",
        "4",
    ]);
    assert!(out.status.success());

    // pooled.jvf stores a single layer; reinjecting it is a clean error.
    let out = run(&[
        "pipeline",
        "--features",
        first.join("pooled.jvf").to_str().unwrap(),
        "--out-dir",
        dir.path().join("second").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("retained layer"));
}

#[test]
fn seed_env_var_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input, 100, 100, 1, 49);
    let (d1, d2, d3) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));

    let base_args = |out: &Path| {
        vec![
            "pipeline".to_string(),
            "--input".into(),
            input.to_str().unwrap().into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
            "--d-v".into(),
            "2".into(),
            "--d-l".into(),
            "4".into(),
        ]
    };
    let run_with_env = |args: Vec<String>, seed: Option<&str>| {
        let mut cmd = Command::new(bin());
        cmd.args(&args).env_remove("TILEPOOL_SEED");
        if let Some(s) = seed {
            cmd.env("TILEPOOL_SEED", s);
        }
        cmd.output().unwrap()
    };

    assert!(run_with_env(base_args(&d1), None).status.success());
    assert!(run_with_env(base_args(&d2), Some("31")).status.success());
    let mut flag_args = base_args(&d3);
    flag_args.extend(["--seed".to_string(), "31".to_string()]);
    assert!(run_with_env(flag_args, None).status.success());

    let (p1, p2, p3) = (
        fs::read(d1.join("pooled.jvf")).unwrap(),
        fs::read(d2.join("pooled.jvf")).unwrap(),
        fs::read(d3.join("pooled.jvf")).unwrap(),
    );
    assert_ne!(p1, p2, "env seed had no effect");
    assert_eq!(p2, p3, "env seed and flag seed disagree");
}

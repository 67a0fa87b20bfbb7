use std::path::Path;
use std::process::{Command, Output};

use gglr_core::grid::ImageGrid;
use gglr_core::netpbm::{read_pbm, read_pgm, write_pgm};

fn gglr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gglr"))
        .args(args)
        .env_remove("GGLR_SIGMA")
        .env_remove("GGLR_MU")
        .env_remove("GGLR_SEED")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene(rows: usize, cols: usize, shift: f64) -> ImageGrid {
    ImageGrid::from_fn(rows, cols, |k, l| {
        let base = 0.2 + 0.004 * l as f64 + 0.002 * k as f64 + shift;
        if l > cols / 2 { base + 0.3 } else { base }
    })
    .unwrap()
}

#[test]
fn degrade_interpolate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("img.pgm");
    let mask_path = dir.path().join("mask.pbm");
    let degraded = dir.path().join("degraded.pgm");
    let restored = dir.path().join("restored.pgm");
    let report = dir.path().join("report.json");
    write_pgm(&img_path, &scene(128, 128, 0.0)).unwrap();

    let out = gglr(&[
        "degrade", "--in", path_str(&img_path), "--fraction", "0.9", "--seed", "4",
        "--out-mask", path_str(&mask_path), "--out-img", path_str(&degraded),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mask = read_pbm(&mask_path).unwrap();
    assert_eq!(mask.missing_count(), 14746);
    let zero_filled = read_pgm(&degraded).unwrap();
    assert!((0..128).all(|k| (0..128).all(|l| mask.is_known(k, l) || zero_filled.get(k, l) == 0.0)));

    let out = gglr(&[
        "interpolate", "--in", path_str(&degraded), "--mask", path_str(&mask_path),
        "--out", path_str(&restored), "--report", path_str(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["method"], "gglr4");
    assert_eq!(json["config"]["sigma"], 0.68);
    assert_eq!(json["config"]["window"], 5);
    assert_eq!(json["mu"], 0.01);

    let out = gglr(&["eval", "--ref", path_str(&img_path), "--test", path_str(&restored), "--json"]);
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["psnr_db"].as_f64().unwrap() > 25.0, "{metrics}");
    assert!(metrics["ssim"].as_f64().unwrap() > 0.5);
}

#[test]
fn eval_of_identical_images_is_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("img.pgm");
    write_pgm(&img_path, &scene(16, 16, 0.1)).unwrap();
    let out = gglr(&["eval", "--ref", path_str(&img_path), "--test", path_str(&img_path), "--json"]);
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["psnr_db"], "inf");
    assert_eq!(metrics["ssim"], 1.0);
    let out = gglr(&["eval", "--ref", path_str(&img_path), "--test", path_str(&img_path)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("psnr_db inf"));
}

#[test]
fn bench_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for i in 0..5 {
        write_pgm(corpus.join(format!("s{i}.pgm")), &scene(32, 32, 0.05 * i as f64)).unwrap();
    }
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = gglr(&[
            "bench", "--dir", path_str(&corpus), "--fractions", "0.9,0.95", "--seed", "11",
            "--no-timing", "--out", path_str(&out_path),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image,fraction,method,psnr_db,ssim,runtime_s"));
    assert_eq!(lines.next().unwrap().split(',').take(3).collect::<Vec<_>>(), ["s0", "0.9", "gglr2"]);
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 3);
}

#[test]
fn mu_select_prints_a_value_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("img.pgm");
    let mask_path = dir.path().join("mask.pbm");
    write_pgm(&img_path, &scene(24, 24, 0.0)).unwrap();
    let out = gglr(&["degrade", "--in", path_str(&img_path), "--fraction", "0.5", "--out-mask", path_str(&mask_path)]);
    assert!(out.status.success());
    let out = gglr(&[
        "mu-select", "--lap-from", path_str(&img_path), "--mask", path_str(&mask_path),
        "--sigma-p", "0.02", "--sigma-o", "0.05",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mu: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((1e-4..=1e2).contains(&mu));
}

#[test]
fn env_overrides_defaults_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("img.pgm");
    let mask_path = dir.path().join("mask.pbm");
    let report = dir.path().join("r.json");
    let restored = dir.path().join("r.pgm");
    write_pgm(&img_path, &scene(16, 16, 0.0)).unwrap();
    assert!(gglr(&["degrade", "--in", path_str(&img_path), "--fraction", "0.5", "--out-mask", path_str(&mask_path)]).status.success());
    let base = [
        "interpolate", "--in", path_str(&img_path), "--mask", path_str(&mask_path),
        "--out", path_str(&restored), "--report", path_str(&report),
    ];
    let run = |extra: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_gglr"))
            .args(base.iter().chain(extra))
            .env("GGLR_MU", "0.5")
            .output()
            .unwrap();
        assert!(out.status.success());
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        json["mu"].as_f64().unwrap()
    };
    assert_eq!(run(&[]), 0.5);
    assert_eq!(run(&["--mu", "0.02"]), 0.02);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P5\n4 4\n255\n\x01").unwrap();
    let out = gglr(&["eval", "--ref", path_str(&bad), "--test", path_str(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = gglr(&["degrade", "--fraction", "0.5"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let img_path = dir.path().join("img.pgm");
    write_pgm(&img_path, &scene(8, 8, 0.0)).unwrap();
    let mask_path = dir.path().join("m.pbm");
    assert!(gglr(&["degrade", "--in", path_str(&img_path), "--fraction", "1", "--out-mask", path_str(&mask_path)]).status.success());
    let out = gglr(&[
        "interpolate", "--in", path_str(&img_path), "--mask", path_str(&mask_path), "--out", path_str(&dir.path().join("o.pgm")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no observations"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dynreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynreg"))
        .args(args)
        .env_remove("DYNREG_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn shape(dir: &TempDir, points: usize) -> PathBuf {
    let path = dir.path().join("blob.ply");
    let out = dynreg(&["shape", "blob", "--points", &points.to_string(), "--seed", "1", "--out", s(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn synth_then_register_recovers_motion() {
    let dir = TempDir::new().unwrap();
    let cloud = shape(&dir, 3000);
    let prefix = dir.path().join("pair");
    let out = dynreg(&[
        "synth", s(&cloud), "--angle-max", "30", "--noise", "0.002", "--outliers", "0.1", "--dist", "uniform",
        "--seed", "4", "--prefix", s(&prefix),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels = std::fs::read_to_string(dir.path().join("pair_labels.txt")).unwrap();
    assert_eq!(labels.lines().filter(|l| *l == "1").count(), 300);

    let report = dir.path().join("report.txt");
    let summary = dir.path().join("summary.tsv");
    let out = dynreg(&[
        "register",
        s(&dir.path().join("pair_source.ply")),
        s(&dir.path().join("pair_target.ply")),
        "--gt",
        s(&dir.path().join("pair_gt.txt")),
        "--out",
        s(&report),
        "--summary",
        s(&summary),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = dynreg::report::read_report(&report).unwrap();
    assert!(parsed.ang_err.unwrap() < 2.0, "ang_err {:?}", parsed.ang_err);
    assert_eq!(parsed.trace.len(), parsed.iterations);
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 2);
}

#[test]
fn flags_override_config_file_and_env() {
    let dir = TempDir::new().unwrap();
    let cloud = shape(&dir, 800);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "max_iterations = 7\nbeta = 0.8\n").unwrap();
    let report = dir.path().join("r.txt");
    let out = Command::new(env!("CARGO_BIN_EXE_dynreg"))
        .args(["register", s(&cloud), s(&cloud), "--out", s(&report), "--beta", "0.85"])
        .env("DYNREG_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = dynreg::report::read_report(&report).unwrap();
    assert_eq!(parsed.config.max_iterations, 7);
    assert_eq!(parsed.config.beta, 0.85);
    assert_eq!(parsed.iterations, 7);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let cloud = shape(&dir, 500);

    let missing = dynreg(&["filter", s(&dir.path().join("none.xyz"))]);
    assert_eq!(code(&missing), 1);

    let bad_step = dynreg(&["voxel", s(&cloud), "--step=-1"]);
    assert_eq!(code(&bad_step), 1);

    let short = dir.path().join("short.ply");
    std::fs::write(&short, "ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
    let out = dynreg(&["filter", s(&short)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("found 4"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "beta = 0.9\nnot_a_key = 1\n").unwrap();
    assert_eq!(code(&dynreg(&["voxel", s(&cloud), "--step", "1", "--config", s(&cfg)])), 2);
    assert_eq!(code(&dynreg(&["voxel", s(&cloud), "--step", "1", "--set", "beta=2"])), 1);
}

#[test]
fn bench_reports_partial_failure() {
    let dir = TempDir::new().unwrap();
    shape(&dir, 600);
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let out = dynreg(&["bench", s(&empty)]);
    assert_eq!(code(&out), 0);

    let cases = dir.path().join("cases.toml");
    std::fs::write(
        &cases,
        "[[case]]\nname = \"good\"\nsource = \"blob.ply\"\nrepeats = 2\n[case.perturbation]\nangle_max_deg = 10.0\n\n\
         [[case]]\nname = \"broken\"\nsource = \"missing.ply\"\ntarget = \"blob.ply\"\n",
    )
    .unwrap();
    let table = dir.path().join("table.tsv");
    let out = dynreg(&["bench", s(&cases), "--out", s(&table), "--max-iterations", "15"]);
    assert_eq!(code(&out), 3);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.contains("broken\tgraphreg\t0\tFAILED"));
    assert!(text.contains("good\tgraphreg\t2\t0\t"));
}

#[test]
fn point_tools_write_clouds() {
    let dir = TempDir::new().unwrap();
    let cloud = shape(&dir, 1000);
    let resampled = dir.path().join("r.xyz");
    assert_eq!(code(&dynreg(&["resample", s(&cloud), "--rate", "0.25", "--out", s(&resampled)])), 0);
    assert_eq!(dynreg::io::read_cloud(&resampled).unwrap().len(), 250);

    let filtered = dynreg(&["filter", s(&cloud)]);
    assert_eq!(code(&filtered), 0);
    let kept = dynreg::io::parse_xyz(&String::from_utf8(filtered.stdout).unwrap()).unwrap();
    assert!(kept.len() <= 1000 && kept.len() > 900);

    let inv = dynreg(&["invariants", s(&cloud)]);
    assert_eq!(code(&inv), 0);
    let text = String::from_utf8(inv.stdout).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(text.lines().nth(1).unwrap().split_whitespace().count(), 5);

    let voxel = dynreg(&["voxel", s(&cloud), "--step", "0.5"]);
    assert_eq!(code(&voxel), 0);
    assert!(String::from_utf8(voxel.stdout).unwrap().lines().count() < 100);
}

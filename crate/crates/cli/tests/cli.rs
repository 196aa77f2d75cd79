use std::path::Path;
use std::process::{Command, Output};

fn tme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tme"))
        .args(args)
        .output()
        .expect("spawn tme")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn bench_in(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["bench", "--scale", "16", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    tme(&args)
}

#[test]
fn compile_transpose_prints_spec_and_register() {
    let out = tme(&["compile", "transpose", "4x5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("[(0,1,5),(0,5,4)]"));
    let reg = lines.next().unwrap().strip_prefix("register: ").unwrap();
    assert!(reg.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn compile_rejects_missing_flag() {
    let out = tme(&["compile", "im2col", "8x8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--kernel"));
}

#[test]
fn trace_prints_offsets_and_padding() {
    let out = tme(&["trace", "[(0,1,4),(0,5,4)]", "--count", "4"]);
    assert_eq!(stdout(&out).trim(), "0 5 10 15");
    let out = tme(&["trace", "[(1,5,1),(1,1,1),(0,5,2),(0,1,3)]", "--count", "8"]);
    assert_eq!(stdout(&out).trim(), "6 7 8 11 12 13 - -");
}

#[test]
fn bench_writes_one_file_per_run_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = bench_in(a.path(), &["--all"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(bench_in(b.path(), &["--all", "--sequential"])
        .status
        .success());
    let jsons = std::fs::read_dir(a.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "json")
        .count();
    assert_eq!(jsons, 14);
    let read = |d: &Path| std::fs::read_to_string(d.join("summary.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bench_reads_config_file_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"workload": ["unfold"], "variant": "tme", "scale": 4}"#,
    )
    .unwrap();
    let out = bench_in(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("unfold-tme-16.json").exists());
    assert!(!dir.path().join("unfold-baseline-16.json").exists());
}

#[test]
fn bench_with_short_lines_still_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench_in(dir.path(), &["--workload", "slicing", "--line-bytes", "32"]);
    assert!(out.status.success());
    let json = std::fs::read_to_string(dir.path().join("slicing-tme-16.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["correct"], true);
}

#[test]
fn bench_unknown_workload_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench_in(dir.path(), &["--workload", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bandwidth_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = tme(&[
        "bandwidth",
        "--scale",
        "32",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("bandwidth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn list_names_every_workload() {
    let text = stdout(&tme(&["list"]));
    for w in [
        "im2col",
        "conv2d",
        "permutation",
        "unfold",
        "batch2space",
        "matmul",
        "slicing",
    ] {
        assert!(text.contains(w), "{w}");
    }
}

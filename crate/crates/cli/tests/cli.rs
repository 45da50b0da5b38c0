use std::path::Path;
use std::process::{Command, Output};

fn gravtrack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gravtrack"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_synth(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth", "--output", "syn", "--seed", "5", "--frames", "4", "--blobs", "3", "--width",
        "128", "--height", "128",
    ];
    args.extend_from_slice(extra);
    let out = gravtrack(&args, dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn version_prints_package_version() {
    let dir = tempfile::tempdir().unwrap();
    let out = gravtrack(&["version"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn synth_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_synth(root, &[]);
    let out = gravtrack(
        &[
            "run",
            "--input",
            "syn",
            "--output",
            "out",
            "--threads",
            "1",
            "--overlay",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for t in 0..4 {
        assert!(root.join(format!("out/mask{t:03}.tif")).is_file());
        assert!(root.join(format!("out/overlay{t:03}.png")).is_file());
    }
    assert!(root.join("out/res_track.txt").is_file());
    assert!(root.join("out/run_report.toml").is_file());

    let out = gravtrack(
        &["eval", "--input", "out", "--gt", "syn/gt", "--output", "ev"],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("recall = 1.0"), "{text}");
    assert!(root.join("ev/eval_report.toml").is_file());
}

#[test]
fn config_file_supplies_paths() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_synth(root, &[]);
    std::fs::write(
        root.join("cfg.toml"),
        "[io]\ninput = \"syn\"\noutput = \"out\"\nthreads = 1\n",
    )
    .unwrap();
    let out = gravtrack(&["run", "--config", "cfg.toml"], root);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("out/res_track.txt").is_file());
}

#[test]
fn dump_field_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_synth(root, &[]);
    let out = gravtrack(
        &["dump-field", "--input", "syn/t000.tif", "--output", "dump"],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "phi",
        "force_x",
        "force_y",
        "force_mag",
        "basins",
        "smoothed",
    ] {
        assert!(root.join(format!("dump/{name}.tif")).is_file(), "{name}");
    }
}

#[test]
fn synth_with_mitosis_records_division() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_synth(root, &["--mitosis", "2:0"]);
    let tracks = std::fs::read_to_string(root.join("syn/gt/man_track.txt")).unwrap();
    let children = tracks
        .lines()
        .filter(|l| l.split_whitespace().nth(3).is_some_and(|p| p != "0"))
        .count();
    assert_eq!(children, 2, "{tracks}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // Usage errors.
    assert_eq!(gravtrack(&["frobnicate"], root).status.code(), Some(1));
    assert_eq!(gravtrack(&["run"], root).status.code(), Some(1));
    assert_eq!(
        gravtrack(&["synth", "--output", "x", "--mitosis", "nope"], root)
            .status
            .code(),
        Some(1)
    );
    // Config errors.
    std::fs::write(root.join("bad.toml"), "bogus = 1\n").unwrap();
    let out = gravtrack(
        &[
            "run", "--config", "bad.toml", "--input", "a", "--output", "b",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(root.join("range.toml"), "[gravity]\nradius = 0\n").unwrap();
    let out = gravtrack(
        &[
            "run",
            "--config",
            "range.toml",
            "--input",
            "a",
            "--output",
            "b",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    // Data errors.
    std::fs::create_dir(root.join("empty")).unwrap();
    let out = gravtrack(&["run", "--input", "empty", "--output", "b"], root);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!root.join("b").join("res_track.txt").exists());
    let out = gravtrack(&["run", "--input", "missing", "--output", "b"], root);
    assert_eq!(out.status.code(), Some(2));
    // Infeasible synthetic layout is a data error too.
    let out = gravtrack(
        &[
            "synth", "--output", "s", "--blobs", "50", "--width", "64", "--height", "64",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
}

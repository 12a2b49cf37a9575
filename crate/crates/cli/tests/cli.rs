use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn reluphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reluphase"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = reluphase(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn csv_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key}"))
        .parse()
        .unwrap()
}

#[test]
fn ntk_preset_matches_its_coordinates() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let common = ["--m", "200", "--seed", "5", "--max-steps", "300"];
    let mut args = vec!["train", "--preset", "ntk", "--out-dir", a.to_str().unwrap()];
    args.extend(common);
    ok(&args);
    let mut args = vec![
        "train",
        "--gamma",
        "0.5",
        "--gamma-prime",
        "0",
        "--out-dir",
        b.to_str().unwrap(),
    ];
    args.extend(common);
    ok(&args);
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
    assert_eq!(
        fs::read(a.join("final.snap")).unwrap(),
        fs::read(b.join("final.snap")).unwrap()
    );
}

#[test]
fn missing_width_is_a_usage_error() {
    let out = reluphase(&["train", "--gamma", "1", "--gamma-prime", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--m"));
}

#[test]
fn bad_values_are_reported() {
    let out = reluphase(&["train", "--gamma", "0.25", "--gamma-prime", "0", "--m", "11"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("even width"));
    let out = reluphase(&["train", "--m", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_manifest_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&[
        "train",
        "--gamma",
        "1.5",
        "--gamma-prime",
        "0",
        "--m",
        "100",
        "--seed",
        "2",
        "--snapshot-stride",
        "50",
        "--max-steps",
        "120",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let manifest = read(dir, "manifest.txt");
    for name in [
        "trajectory.csv",
        "initial.snap",
        "final.snap",
        "scatter.csv",
        "condensation.csv",
        "snapshots/00000.snap",
    ] {
        assert!(dir.join(name).exists(), "{name}");
        assert!(manifest.contains(name), "{name} missing from manifest");
    }
    assert!(manifest.contains("seed = 2"));
    assert!(manifest.contains("dataset_fingerprint = "));
    assert!(read(dir, "trajectory.csv").starts_with("t,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "# settings\ngamma = 1.5\ngamma_prime = -0.5\nm = 300\nseed = 4\noriginal = true\n",
    )
    .unwrap();
    let printed = ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--print-config",
    ]);
    assert!(printed.contains("seed = 9\n"), "{printed}");
    assert!(printed.contains("gamma-prime = -0.5\n"));
    assert!(printed.contains("m = 300\n"));
    assert!(printed.contains("original = true\n"));
}

#[test]
fn printed_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = ok(&[
        "scan",
        "--gamma",
        "1,1.5",
        "--gamma-prime",
        "0",
        "--jobs",
        "3",
        "--print-config",
    ]);
    let cfg = tmp.path().join("scan.cfg");
    fs::write(&cfg, &first).unwrap();
    let second = ok(&["scan", "--config", cfg.to_str().unwrap(), "--print-config"]);
    assert_eq!(first, second);
    assert!(first.contains("gamma = 1,1.5\n"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "widht = 10\n").unwrap();
    let out = reluphase(&["train", "--config", cfg.to_str().unwrap(), "--m", "10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("widht"));
}

#[test]
fn scan_resumes_from_cache_and_ignores_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let grid = [
        "scan",
        "--gamma",
        "1.5",
        "--gamma-prime",
        "0",
        "--widths",
        "100,200,400",
        "--replicates",
        "2",
        "--seed",
        "7",
    ];
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = grid.to_vec();
        args.extend(["--out-dir", dir.to_str().unwrap()]);
        args.extend(extra);
        ok(&args);
        read(dir, "replicates.csv") + &read(dir, "phase_map.csv") + &read(dir, "summary.csv")
    };
    let first = run(&a, &[]);
    let cached = fs::read_dir(a.join("cache")).unwrap().next().unwrap().unwrap().path();
    assert_eq!(fs::read_dir(&cached).unwrap().count(), 6);
    assert_eq!(first, run(&a, &[]));
    assert_eq!(first, run(&b, &["--jobs", "3", "--no-cache"]));
    assert!(!b.join("cache").exists());
}

#[test]
fn spectrum_is_positive_on_the_default_data() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&[
        "spectrum",
        "--preset",
        "ntk",
        "--m",
        "1000",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let text = read(dir, "spectrum.csv");
    assert!(csv_value(&text, "lambda_a") > 0.0);
    assert!(csv_value(&text, "lambda_w") > 0.0);
    assert!(csv_value(&text, "rate_linear") > 0.0);
    assert_eq!(
        read(dir, "k_a.csv").lines().count(),
        read(dir, "k_w.csv").lines().count()
    );
}

#[test]
fn antisymmetric_pairs_share_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&[
        "condense",
        "--m",
        "400",
        "--asi",
        "--seed",
        "3",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let text = read(dir, "condensation.csv");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let (active, clusters): (usize, usize) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert_eq!(active % 2, 0);
    assert!(clusters <= active / 2, "{clusters} clusters for {active} active");
}

#[test]
fn condense_reads_train_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("t");
    ok(&[
        "train",
        "--gamma",
        "1.75",
        "--gamma-prime",
        "0",
        "--m",
        "200",
        "--seed",
        "1",
        "--out-dir",
        t.to_str().unwrap(),
    ]);
    let c = tmp.path().join("c");
    let stdout = ok(&[
        "condense",
        "--snapshot",
        t.join("final.snap").to_str().unwrap(),
        "--initial",
        t.join("initial.snap").to_str().unwrap(),
        "--out-dir",
        c.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("initial"));
    let scatter = read(&c, "scatter.csv");
    assert_eq!(scatter.lines().filter(|l| l.starts_with("current,")).count(), 200);
    assert_eq!(
        read(&c, "condensation.csv").lines().nth(2),
        read(&t, "condensation.csv")
            .lines()
            .nth(2)
            .map(|l| l.replacen("final", "current", 1))
            .as_deref()
    );
}

#[test]
fn verify_reports_every_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = reluphase(&[
        "verify",
        "--gamma",
        "0.25",
        "--gamma-prime",
        "0",
        "--m",
        "200",
        "--jobs",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = read(dir, "reports.csv");
    let names: Vec<&str> = reports.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        [
            "initial-param-max",
            "initial-norms",
            "loss-decay",
            "rd-w",
            "neuron-amplitude",
            "initial-risk"
        ]
    );
}

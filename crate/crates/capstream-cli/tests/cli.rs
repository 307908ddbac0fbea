//! Black-box tests of the command-line surface: subcommands, flags, exit
//! codes, and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn capstream() -> Command {
    Command::new(env!("CARGO_BIN_EXE_capstream"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn run_preset_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let status = capstream()
        .args(["run", "--preset", "a-dec-fixed", "--reps", "5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn same_seed_reproduces_bytes_and_seed_flag_changes_them() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let dir_c = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&dir_a, "7"), (&dir_b, "7"), (&dir_c, "8")] {
        let status = capstream()
            .args([
                "run",
                "--preset",
                "b-quantile-swap",
                "--reps",
                "4",
                "--seed",
                seed,
                "--jobs",
                "2",
                "--out",
            ])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        read(&dir_a.path().join("report.csv")),
        read(&dir_b.path().join("report.csv"))
    );
    assert_ne!(
        read(&dir_a.path().join("report.csv")),
        read(&dir_c.path().join("report.csv"))
    );
}

#[test]
fn config_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        r#"
        [run]
        method = "cap"
        alpha = 1.4
        horizon = 10

        [data]
        scenario = "a"

        [predictor]
        kind = "ols"

        [selector]
        kind = "fixed"
        threshold = 1.0
        "#,
    )
    .unwrap();
    let output = capstream().arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("run.alpha"), "{stderr}");
}

#[test]
fn unknown_preset_exits_two_and_lists_names() {
    let output = capstream()
        .args(["run", "--preset", "nonexistent"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("b-quantile-swap"), "{stderr}");
}

#[test]
fn missing_csv_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ingest.toml");
    std::fs::write(
        &config,
        r#"
        [run]
        method = "cap"
        alpha = 0.1
        replications = 1

        [data]
        csv_path = "/nonexistent/stream.csv"
        csv_schema = "precomputed"
        holdout_size = 5

        [selector]
        kind = "fixed"
        threshold = 0.0

        [holdout]
        mode = "full"
        "#,
    )
    .unwrap();
    let output = capstream().arg("ingest-run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn ingest_run_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("stream.csv");
    let mut text = String::from("t,mu_hat,v,y\n");
    for t in 0..60 {
        let mu = (t as f64 * 0.41).cos();
        let y = mu + ((t % 5) as f64 - 2.0) / 4.0;
        text.push_str(&format!("{t},{mu},{mu},{y}\n"));
    }
    std::fs::write(&csv_path, text).unwrap();

    let out_dir = dir.path().join("out");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
            [run]
            method = "cap"
            alpha = 0.2
            replications = 2
            metric_stride = 5
            write_run_logs = true
            output_dir = "{}"

            [data]
            csv_path = "{}"
            csv_schema = "precomputed"
            holdout_size = 15

            [selector]
            kind = "mean"

            [picker]
            kind = "adaptive-swap"

            [holdout]
            mode = "full"
            "#,
            out_dir.display(),
            csv_path.display()
        ),
    )
    .unwrap();
    let status = capstream().arg("ingest-run").arg(&config).status().unwrap();
    assert!(status.success());

    // Rebuild the report from the raw logs and compare the aggregate rows.
    let rebuilt_dir = dir.path().join("rebuilt");
    let mut cmd = capstream();
    cmd.arg("report");
    for i in 0..2 {
        cmd.arg(out_dir.join(format!("runlog_{i:04}.csv")));
    }
    cmd.args([
        "--stride",
        "5",
        "--scenario",
        "stream",
        "--selector",
        "mean",
    ]);
    cmd.arg("--picker").arg("adaptive-swap");
    cmd.arg("--out").arg(&rebuilt_dir);
    assert!(cmd.status().unwrap().success());

    let original = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let rebuilt = std::fs::read_to_string(rebuilt_dir.join("report.csv")).unwrap();
    let metric_cols = |text: &str| -> Vec<String> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').skip(5).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(metric_cols(&original), metric_cols(&rebuilt));
}

#[test]
fn subcommand_data_source_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("csv.toml");
    std::fs::write(
        &config,
        r#"
        [run]
        method = "cap"
        alpha = 0.1
        replications = 1

        [data]
        csv_path = "whatever.csv"
        csv_schema = "precomputed"
        holdout_size = 5

        [selector]
        kind = "fixed"
        threshold = 0.0

        [holdout]
        mode = "full"
        "#,
    )
    .unwrap();
    // A CSV-source config must go through ingest-run, and vice versa.
    let output = capstream().arg("run").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = capstream()
        .args(["ingest-run", "--preset", "a-dec-fixed"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

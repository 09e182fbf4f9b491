//! End-to-end checks of the `odmr` binary: command wiring, file contracts,
//! exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn odmr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_odmr"))
}

fn run(args: &[&str]) -> Output {
    odmr().args(args).output().expect("spawn odmr")
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn small_config(dir: &Path, field_mt: f64, n: usize) -> String {
    write_config(
        dir,
        &format!(
            "[geometry]\napplied_field_mt = {field_mt}\n\
             [ensemble]\nn = {n}\nseed = 7\n\
             [grid]\nstart_mhz = 2850.0\nstop_mhz = 2890.0\npoints = 201\n\
             [output]\ndir = \"{}\"\n",
            dir.join("out").display()
        ),
    )
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 0.0, 2000);
    assert_code(&run(&["simulate", "--config", &config]), 0);

    let out = dir.path().join("out");
    for name in [
        "excitation.csv",
        "signal.csv",
        "excitation.json",
        "signal.json",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let signal = fs::read_to_string(out.join("signal.csv")).unwrap();
    assert!(signal.starts_with("frequency_mhz,signal\n"));
    let excitation = fs::read_to_string(out.join("excitation.csv")).unwrap();
    assert!(excitation.starts_with("frequency_mhz,excitation\n"));
    assert_eq!(signal.lines().count(), 202);

    // provenance: the JSON embeds the effective config and the tool version
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("signal.json")).unwrap()).unwrap();
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["config"]["ensemble"]["seed"], 7);
    assert_eq!(doc["spectrum"]["kind"], "signal");
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1.0, 3000);
    assert_code(&run(&["simulate", "--config", &config]), 0);
    let first = fs::read(dir.path().join("out/signal.csv")).unwrap();
    assert_code(&run(&["simulate", "--config", &config]), 0);
    let second = fs::read(dir.path().join("out/signal.csv")).unwrap();
    assert_eq!(first, second);

    // --seed overrides the config seed and changes the draw
    assert_code(&run(&["simulate", "--config", &config, "--seed", "8"]), 0);
    let reseeded = fs::read(dir.path().join("out/signal.csv")).unwrap();
    assert_ne!(first, reseeded);
}

#[test]
fn invalid_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 0.0, 100);
    let out = odmr()
        .args(["simulate", "--config", &config])
        .env("ODMR_THREADS", "zero")
        .output()
        .unwrap();
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ODMR_THREADS"));
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "[model]\ngamma_mhz = 0.3\n");
    let out = run(&["simulate", "--config", &unknown]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));

    let invalid = write_config(
        dir.path(),
        "[grid]\nstart_mhz = 2890.0\nstop_mhz = 2850.0\n",
    );
    assert_code(&run(&["simulate", "--config", &invalid]), 2);

    let missing = dir.path().join("nope.toml").display().to_string();
    assert_code(&run(&["simulate", "--config", &missing]), 2);
}

#[test]
fn fit_rejects_short_and_malformed_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 0.0, 1000);

    let short = dir.path().join("short.csv");
    fs::write(
        &short,
        "frequency_mhz,signal\n2850.0,0.99\n2851.0,0.99\n2852.0,0.99\n2853.0,0.99\n2854.0,0.99\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--config",
        &config,
        "--joint",
        "--data",
        short.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("at least 10"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "frequency_mhz,signal\n2850.0,NaN\n").unwrap();
    let out = run(&[
        "fit",
        "--config",
        &config,
        "--joint",
        "--data",
        nan.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    // staged mode without the dip window in the zero-field data
    let zero = dir.path().join("zero.csv");
    let rows: String = (0..40)
        .map(|i| format!("{},0.99\n", 2880.0 + 0.25 * i as f64))
        .collect();
    fs::write(&zero, format!("frequency_mhz,signal\n{rows}")).unwrap();
    let with = dir.path().join("with.csv");
    let rows: String = (0..40)
        .map(|i| format!("{},0.99\n", 2800.0 + 3.5 * i as f64))
        .collect();
    fs::write(&with, format!("frequency_mhz,signal\n{rows}")).unwrap();
    let out = run(&[
        "fit",
        "--config",
        &config,
        "--zero-field",
        zero.to_str().unwrap(),
        "--with-field",
        with.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dip window"));
}

#[test]
fn fix_flag_freezes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    // fix everything: the fit degenerates to a single residual evaluation
    let config = write_config(
        dir.path(),
        &format!(
            "[ensemble]\nseed = 3\n\
             [fit]\nensemble_n = 500\n\
             fixed = [\"delta_b\", \"delta_e\", \"a_over_i0\", \"d_zfs\", \"drive\"]\n\
             [output]\ndir = \"{}\"\n",
            dir.path().join("out").display()
        ),
    );
    let data = dir.path().join("data.csv");
    let rows: String = (0..30)
        .map(|i| format!("{},0.995\n", 2855.0 + i as f64))
        .collect();
    fs::write(&data, format!("frequency_mhz,signal\n{rows}")).unwrap();

    let out = run(&[
        "fit",
        "--config",
        &config,
        "--joint",
        "--data",
        data.to_str().unwrap(),
        "--fix",
        "gamma=0.3",
    ]);
    assert_code(&out, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(doc["result"]["iterations"], 0);
    assert_eq!(doc["result"]["converged"], true);
    assert_eq!(doc["result"]["params"]["gamma_mhz"], 0.3);
    assert_eq!(doc["result"]["params"]["fixed"]["gamma"], true);
    assert!(dir.path().join("out/fit_report.json").exists());

    let bad = run(&[
        "fit",
        "--config",
        &config,
        "--joint",
        "--data",
        data.to_str().unwrap(),
        "--fix",
        "nope=1",
    ]);
    assert_code(&bad, 2);
}

#[test]
fn sweep_outputs_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "[ensemble]\nn = 1000\nseed = 5\n\
             [grid]\nstart_mhz = 2860.0\nstop_mhz = 2880.0\npoints = 101\n\
             [output]\ndir = \"{}\"\n",
            dir.path().join("out").display()
        ),
    );
    assert_code(
        &run(&[
            "sweep",
            "--config",
            &config,
            "--param",
            "gamma",
            "--values",
            "0.1,0.3,1.0",
        ]),
        0,
    );
    let csv = fs::read_to_string(dir.path().join("out/sweep_gamma.csv")).unwrap();
    assert!(csv.starts_with("parameter_value,frequency_mhz,value\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 101);
    let metrics: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/sweep_gamma_metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["parameter"], "gamma");
    assert_eq!(metrics["metrics"].as_array().unwrap().len(), 3);

    assert_code(
        &run(&[
            "sweep", "--config", &config, "--param", "bogus", "--values", "1,2,3",
        ]),
        2,
    );
    assert_code(
        &run(&[
            "sweep",
            "--config",
            &config,
            "--param",
            "gamma",
            "--values",
            "0.3,0.1,1.0",
        ]),
        2,
    );
    assert_code(
        &run(&[
            "sweep",
            "--config",
            &config,
            "--param",
            "gamma",
            "--values",
            "0.1,x,1.0",
        ]),
        2,
    );
}

#[test]
fn analyze_reads_both_csv_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 0.0, 20_000);
    assert_code(&run(&["simulate", "--config", &config]), 0);
    let out = dir.path().join("out");

    for name in ["excitation.csv", "signal.csv"] {
        let result = run(&[
            "analyze",
            "--spectrum",
            out.join(name).to_str().unwrap(),
            "--out",
            out.join("report.json").to_str().unwrap(),
        ]);
        assert_code(&result, 0);
        let doc: serde_json::Value =
            serde_json::from_str(&String::from_utf8_lossy(&result.stdout)).unwrap();
        let peaks = doc["report"]["peaks"].as_array().unwrap();
        assert_eq!(peaks.len(), 2, "{name}: {peaks:?}");
        assert!(
            doc["report"]["dip"].is_object(),
            "{name} should show the dip"
        );
        assert!(out.join("report.json").exists());
    }

    assert_code(&run(&["analyze", "--spectrum", "/nonexistent.csv"]), 3);
}

#[test]
fn fit_round_trip_on_tool_generated_data() {
    // Simulate both datasets at the reference parameters with the same seed
    // and ensemble size the fitter uses, then recover the widths from the
    // CSVs alone. Full-precision CSV makes the self-residual exactly zero.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let base = |field: f64, grid: &str, subdir: &str| {
        format!(
            "[geometry]\napplied_field_mt = {field}\n\
             [ensemble]\nn = 20000\nseed = 99\n\
             {grid}\
             [fit]\nensemble_n = 20000\n\
             [output]\ndir = \"{}\"\n",
            out.join(subdir).display()
        )
    };
    let zero_config = write_config(
        dir.path(),
        &base(
            0.0,
            "[grid]\nstart_mhz = 2850.0\nstop_mhz = 2890.0\npoints = 401\n",
            "zero",
        ),
    );
    assert_code(&run(&["simulate", "--config", &zero_config]), 0);
    let with_config = write_config(
        dir.path(),
        &base(
            2.0,
            "[grid]\nstart_mhz = 2800.0\nstop_mhz = 2940.0\npoints = 281\n",
            "with",
        ),
    );
    assert_code(&run(&["simulate", "--config", &with_config]), 0);

    let result = run(&[
        "fit",
        "--config",
        &with_config,
        "--zero-field",
        out.join("zero/signal.csv").to_str().unwrap(),
        "--with-field",
        out.join("with/signal.csv").to_str().unwrap(),
        "--field-mt",
        "2.0",
    ]);
    assert_code(&result, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&result.stdout)).unwrap();
    let params = &doc["result"]["params"];
    let truth = [
        ("gamma_mhz", 0.3),
        ("delta_b_mhz", 1.96),
        ("delta_e_mhz", 0.73),
    ];
    for (name, want) in truth {
        let got = params[name].as_f64().unwrap();
        let rel = (got - want).abs() / want;
        assert!(
            rel <= 0.15,
            "{name}: recovered {got:.4}, truth {want} ({:.1}% off)",
            100.0 * rel
        );
    }
    assert_eq!(doc["result"]["stages"].as_array().unwrap().len(), 3);
    assert_eq!(doc["mode"], "staged");
}

#[test]
fn simulated_peak_counts_track_the_applied_field() {
    // 2 peaks at zero field, 4 under 1 and 2 mT
    let dir = tempfile::tempdir().unwrap();
    for (field, expected) in [(0.0, 2), (1.0, 4), (2.0, 4)] {
        let config = write_config(
            dir.path(),
            &format!(
                "[geometry]\napplied_field_mt = {field}\n\
                 [ensemble]\nn = 100000\nseed = 7\n\
                 [grid]\nstart_mhz = 2800.0\nstop_mhz = 2940.0\npoints = 1401\n\
                 [output]\ndir = \"{}\"\n",
                dir.path().join("out").display()
            ),
        );
        assert_code(&run(&["simulate", "--config", &config]), 0);
        let result = run(&[
            "analyze",
            "--spectrum",
            dir.path().join("out/excitation.csv").to_str().unwrap(),
        ]);
        assert_code(&result, 0);
        let doc: serde_json::Value =
            serde_json::from_str(&String::from_utf8_lossy(&result.stdout)).unwrap();
        let peaks = doc["report"]["peaks"].as_array().unwrap();
        assert_eq!(peaks.len(), expected, "B = {field} mT: {peaks:?}");
    }
}

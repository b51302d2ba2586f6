use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pvann_core::ann::{export_portable, import_portable};

fn pvann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvann"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("run pvann")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn column(csv: &str, k: usize) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn irradiance_profile_is_unimodal_and_peaks_at_solar_noon() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pvann(&["irradiance", "--out", &p(tmp.path(), "irr")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("irr/irradiance.csv")).unwrap();
    let g = column(&csv, 1);
    let t = column(&csv, 0);
    let peak = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
    assert!(g[..=peak].windows(2).all(|w| w[1] >= w[0]));
    assert!(g[peak..].windows(2).all(|w| w[1] <= w[0]));
    assert!((t[peak] - 12.3315).abs() <= 5.0 / 60.0, "{}", t[peak]);
    let manifest = fs::read_to_string(tmp.path().join("irr/manifest.txt")).unwrap();
    assert!(manifest.contains("manifest_version = 1"));
    assert!(manifest.contains("command = irradiance"));
    assert!(manifest.contains("irradiance.csv = "));
}

#[test]
fn night_window_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pvann(&[
        "irradiance",
        "--out",
        &p(tmp.path(), "night"),
        "--set",
        "start_h=20",
        "--set",
        "end_h=23",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("night/irradiance.csv")).unwrap();
    assert!(column(&csv, 1).iter().all(|g| *g == 0.0));
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "latitude = -20\nlatitud = 3\n").unwrap();
    let out = pvann(&["irradiance", "--config", cfg.to_str().unwrap(), "--out", &p(tmp.path(), "x")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`latitud`"), "{}", stderr(&out));

    let out = pvann(&["irradiance", "--set", "bogus=1", "--out", &p(tmp.path(), "y")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`bogus`"));

    let out = pvann(&["irradiance", "--set", "latitude=north", "--out", &p(tmp.path(), "z")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn manifest_from_another_command_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&pvann(&["irradiance", "--out", &p(tmp.path(), "irr")])), 0);
    let out = pvann(&[
        "dataset",
        "--config",
        &p(tmp.path(), "irr/manifest.txt"),
        "--out",
        &p(tmp.path(), "ds"),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_inputs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = p(tmp.path(), "nope.csv");
    let out = pvann(&["calibrate", "--sensor", &missing, "--out", &p(tmp.path(), "c")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = pvann(&["calibrate", "--out", &p(tmp.path(), "c")]);
    assert_eq!(code(&out), 2);
    let out = pvann(&[
        "eval",
        "--weights",
        &missing,
        "--dataset",
        &p(tmp.path(), "ds"),
        "--out",
        &p(tmp.path(), "e"),
    ]);
    assert_eq!(code(&out), 2);
    let out = pvann(&["simulate", "--out", &p(tmp.path(), "s")]);
    assert_eq!(code(&out), 2, "ann without weights");
    assert!(stderr(&out).contains("weights"));
}

#[test]
fn calibrate_recovers_a_linear_sensor_and_fails_at_runtime_on_a_flat_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sensor = String::from("time_h,volts\n");
    let mut flat = sensor.clone();
    assert_eq!(code(&pvann(&["irradiance", "--out", &p(tmp.path(), "irr")])), 0);
    let csv = fs::read_to_string(tmp.path().join("irr/irradiance.csv")).unwrap();
    for (t, g) in column(&csv, 0).iter().zip(column(&csv, 1)) {
        sensor += &format!("{t},{}\n", (g - 5.0) / 250.0);
        flat += &format!("{t},1.5\n");
    }
    fs::write(tmp.path().join("sensor.csv"), sensor).unwrap();
    fs::write(tmp.path().join("flat.csv"), flat).unwrap();

    let out = pvann(&["calibrate", "--sensor", &p(tmp.path(), "sensor.csv"), "--out", &p(tmp.path(), "cal")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("cal/calibration.txt")).unwrap();
    let value = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("gain_wm2_per_volt") - 250.0).abs() < 1e-6);
    assert!((value("offset_wm2") - 5.0).abs() < 1e-6);

    let out = pvann(&["calibrate", "--sensor", &p(tmp.path(), "flat.csv"), "--out", &p(tmp.path(), "cal2")]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn dataset_train_eval_simulate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = p(tmp.path(), "ds");
    let out = pvann(&["dataset", "--out", &ds]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("ds/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101_920 + 1);
    let summary = fs::read_to_string(tmp.path().join("ds/summary.txt")).unwrap();
    assert!(summary.contains("modal_duty_bin_lo = 0.66"), "{summary}");

    let tr = p(tmp.path(), "tr");
    let out = pvann(&[
        "train",
        "--dataset",
        &ds,
        "--out",
        &tr,
        "--set",
        "candidates=3-6-3-1:linear:linear,3-6-3-1:tanh",
        "--set",
        "epochs=2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ranking = fs::read_to_string(tmp.path().join("tr/ranking.csv")).unwrap();
    let first = ranking.lines().nth(1).unwrap();
    assert!(first.starts_with("1,1,3-6-3-1:tanh:tanh,"), "{ranking}");
    let weights = fs::read_to_string(tmp.path().join("tr/best_weights.mlpw")).unwrap();
    let (net, norm) = import_portable(&weights).unwrap();
    assert_eq!(export_portable(&net, &norm).unwrap(), weights);
    let c = fs::read_to_string(tmp.path().join("tr/best_weights.c")).unwrap();
    assert!(c.contains("pvann_predict_duty"));
    let history = fs::read_to_string(tmp.path().join("tr/mse_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let w = p(tmp.path(), "tr/best_weights.mlpw");
    let out = pvann(&["eval", "--weights", &w, "--dataset", &ds, "--out", &p(tmp.path(), "ev")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(tmp.path().join("ev/mse_report.txt")).unwrap();
    assert!(report.contains("samples = 30576"));
    assert!(report.contains("within_threshold = "));
    let diag = fs::read_to_string(tmp.path().join("ev/diagonal.csv")).unwrap();
    assert_eq!(diag.lines().count(), 30576 + 1);

    let out = pvann(&[
        "simulate",
        "--weights",
        &w,
        "--out",
        &p(tmp.path(), "sim"),
        "--set",
        "start_h=10",
        "--set",
        "end_h=11",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cmp = fs::read_to_string(tmp.path().join("sim/comparison.txt")).unwrap();
    assert!(cmp.contains("duty_stddev.winner = ann"), "{cmp}");
    for f in ["run_po.csv", "run_ann.csv", "metrics_po.txt", "metrics_ann.txt", "comparison.csv", "profile.csv"] {
        assert!(tmp.path().join("sim").join(f).exists(), "{f}");
    }

    let out = pvann(&[
        "simulate",
        "--set",
        "controllers=po,po",
        "--out",
        &p(tmp.path(), "sim2"),
    ]);
    assert_eq!(code(&out), 2);
}

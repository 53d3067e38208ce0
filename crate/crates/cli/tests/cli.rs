use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phasecal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasecal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn noiseless_sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = phasecal(&[
        "calibrate-sweep",
        "--snr",
        "inf",
        "--iters",
        "10",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("sweep.csv");
    assert!(stdout(&o).contains("sweep.csv"));
    let text = read(&csv);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        &header[..7],
        [
            "snr_db",
            "err_max",
            "err_avg",
            "err_max_opt",
            "err_avg_opt",
            "gain_err_max_db",
            "gain_err_avg_db"
        ]
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "inf");
    for v in &row[1..9] {
        assert!(v.parse::<f64>().unwrap() <= 1e-7, "{row:?}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("sweep.csv.meta.json"))).unwrap();
    assert_eq!(meta["config"]["iterations"], 10);
    assert_eq!(meta["config"]["snr_list_db"][0], "inf");
    assert!(meta["version"]
        .as_str()
        .unwrap()
        .starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = phasecal(&[
            "calibrate-sweep",
            "--snr",
            "15,25",
            "--iters",
            "30",
            "--seed",
            "9",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(
        read(&a.path().join("sweep.csv")),
        read(&b.path().join("sweep.csv"))
    );
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("res");
    fs::write(
        &cfg,
        format!(
            r#"{{"experiment":"rev-compare","snr_list_db":[30],"iterations":5,"output_dir":{:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = phasecal(&[
        "rev-compare",
        "--config",
        cfg.to_str().unwrap(),
        "--iters",
        "8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out.join("rev_compare.csv"));
    assert!(text.starts_with("snr_db,err_max_opt,err_avg_opt,err_max_rev,err_avg_rev"));
    let row = text.lines().nth(1).unwrap();
    assert!(row.contains(",93,64,"), "{row}");
    let meta: serde_json::Value =
        serde_json::from_str(&read(&out.join("rev_compare.csv.meta.json"))).unwrap();
    assert_eq!(meta["config"]["iterations"], 8);
    assert_eq!(meta["config"]["errors"]["phase_dependent"], true);
}

#[test]
fn eirp_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = phasecal(&["eirp-cdf", "--snr", "20,30", "--iters", "4", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "cdf_uncalibrated.csv",
        "cdf_calibrated_20db.csv",
        "cdf_calibrated_30db.csv",
        "percentiles.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
        assert!(
            dir.path().join(format!("{name}.meta.json")).exists(),
            "{name}"
        );
    }
    let cdf = read(&dir.path().join("cdf_uncalibrated.csv"));
    assert_eq!(cdf.lines().next().unwrap(), "scaled_eirp_db,cum_prob");
    assert_eq!(cdf.lines().count(), 4 * 1000 + 1);
    let p: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("percentiles.json"))).unwrap();
    assert_eq!(p[0]["codebook"], "uncalibrated");
    assert_eq!(p[2]["snr_db"], 30.0);
    assert!(p[1]["p50_db"].is_number() && p[1]["p99_db"].is_number());
}

#[test]
fn instance_dumps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("truth.json");
    fs::write(
        &cfg,
        r#"{"n_antennas":4,"q_bits":3,"phase_dependent":false,"seed":3}"#,
    )
    .unwrap();
    let out = dir.path().join("one");
    let o = phasecal(&[
        "instance",
        "--config",
        cfg.to_str().unwrap(),
        "--snr",
        "25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("records.csv")).lines().count(), 94);
    assert!(read(&out.join("estimate.csv")).starts_with("i,k,b_hat,phi_hat_rad\n"));
    assert_eq!(read(&out.join("refined_estimate.csv")).lines().count(), 33);
    assert!(read(&out.join("trace.csv")).starts_with("iteration,objective,damping,step_norm\n"));
    assert_eq!(read(&out.join("rev.csv")).lines().count(), 9);
    let s: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(s["measurements"], 93);
}

#[test]
fn default_config_round_trips() {
    let o = phasecal(&["default-config", "eirp-cdf"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["experiment"], "eirp-cdf");
    assert_eq!(v["iterations"], 1000);
    assert_eq!(v["directions_deg"].as_array().unwrap().len(), 6);
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = phasecal(&["calibrate-sweep", "--config", missing.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));

    let cfg = dir.path().join("wrong.json");
    fs::write(&cfg, r#"{"experiment":"eirp-cdf"}"#).unwrap();
    let o = phasecal(&["calibrate-sweep", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("eirp-cdf"));

    fs::write(&cfg, r#"{"experiment":"calibrate-sweep","iterations":0}"#).unwrap();
    let o = phasecal(&["calibrate-sweep", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("iterations"));

    let o = phasecal(&["calibrate-sweep", "--snr", "loud"]);
    assert!(!o.status.success());

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = phasecal(&[
        "calibrate-sweep",
        "--snr",
        "inf",
        "--iters",
        "1",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sub"));
}

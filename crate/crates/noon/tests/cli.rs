//! The `noon` binary: exit codes, help, files and determinism.

use std::path::Path;
use std::process::{Command, Output};

use noon::config::KEYS;
use noon::io::{read_table, read_table_file, write_scan};
use noon::reproduce::count_dips;
use noon_core::analysis::ScanCurve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noon"))
        .args(args)
        .env_remove("NOON_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dip_csv(path: &Path, dips: &[(f64, f64, f64)]) {
    let mut text = String::from("tv_um,rate\n");
    for i in 0..81 {
        let x = -800.0 + 20.0 * i as f64;
        let y = dips.iter().fold(1.0, |acc, &(v, c, w)| {
            let u = (x - c) / w;
            acc * (1.0 - v * (-4.0 * std::f64::consts::LN_2 * u * u).exp())
        });
        text.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn json_number(text: &str, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v[key].as_f64().unwrap()
}

#[test]
fn help_lists_every_key() {
    let o = noon(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for k in KEYS {
        assert!(text.contains(k.name), "{} missing from --help", k.name);
    }
    for cmd in ["fringe", "scan", "fit", "predict", "infer-ea", "reproduce"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn csv_round_trip_keeps_twelve_digits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..50).map(|i| -1000.0 + 40.0 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|_| rng.random::<f64>() * 10f64.powi(rng.random_range(-8..4))).collect();
    let e: Vec<f64> = y.iter().map(|v| v * rng.random::<f64>()).collect();
    let a: Vec<f64> = x.iter().map(|_| rng.random::<f64>()).collect();
    let curve = ScanCurve::new(x.clone(), y, Some(e)).unwrap();
    let acc = ScanCurve::new(x, a, None).unwrap();
    let mut buf = Vec::new();
    write_scan(&mut buf, &curve, &acc).unwrap();
    let back = read_table(buf.as_slice(), "mem").unwrap().curve().unwrap();
    let close = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .all(|(p, q)| (p - q).abs() <= 1e-12 * p.abs().max(q.abs()))
    };
    assert!(close(curve.x(), back.x()));
    assert!(close(curve.y(), back.y()));
    assert!(close(curve.yerr().unwrap(), back.yerr().unwrap()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    assert_eq!(noon(&["predict"]).status.code(), Some(0));
    assert_eq!(noon(&["predict", "-s", "bogus=1"]).status.code(), Some(2));
    assert_eq!(noon(&["predict", "-s", "beta=1.5"]).status.code(), Some(2));
    assert_eq!(noon(&["fit", "-s", "input=/nonexistent.csv"]).status.code(), Some(2));
    assert_eq!(noon(&["scan", "--out-dir", d, "-s", "grid_step=0"]).status.code(), Some(2));

    let one = dir.path().join("one.csv");
    dip_csv(&one, &[(0.9, 0.0, 185.0)]);
    let input = format!("input={}", one.display());
    let o = noon(&["fit", "-s", &input, "-s", "n_dips=2", "-s", "centers=0,1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    // sigma far from the FWHH target and calibration off: rows fail
    let o = noon(&[
        "reproduce", "--out-dir", d, "-s", "calibrate_sigma=false", "-s", "sigma=20",
        "-s", "ea3=1", "-s", "ea4=1", "-s", "svg=false",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FWHH overlapped"));
}

#[test]
fn fringe_periods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let rates = |extra: &[&str]| {
        let mut args = vec!["fringe", "--out-dir", d, "-s", "fringe_points=120"];
        args.extend_from_slice(extra);
        assert!(noon(&args).status.success());
        read_table_file(&dir.path().join("fringe.csv")).unwrap().columns[1].clone()
    };

    // N = 3: period 2 pi / 3 is 40 samples
    let r3 = rates(&[]);
    assert!((0..80).all(|i| (r3[i] - r3[i + 40]).abs() < 1e-12));
    assert!((r3[0]).abs() < 1e-12 && (r3[20] - 2.0).abs() < 1e-12);
    // N = 2: period pi
    let r2 = rates(&["-s", "n=2"]);
    assert!((0..60).all(|i| (r2[i] - r2[i + 60]).abs() < 1e-12));
    assert!((r2[30] - 2.0).abs() < 1e-12);
    // a single component gives no fringe
    let flat = rates(&["-s", "c0=1", "-s", "cn=0"]);
    assert!(flat.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!(dir.path().join("fringe.svg").exists());
}

#[test]
fn scan_dips_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let scan = |extra: &[&str]| {
        let mut args = vec!["scan", "--out-dir", d, "-s", "mc_samples=400"];
        args.extend_from_slice(extra);
        let o = noon(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join("scan.csv")).unwrap()
    };
    let curve = || read_table_file(&dir.path().join("scan.csv")).unwrap().curve().unwrap();

    scan(&[]);
    let c = curve();
    assert_eq!(count_dips(&c), 1);
    let max = c.y().iter().copied().fold(0.0, f64::max);
    let min = c.y().iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min < 1e-12 * max, "ideal dip reaches zero");

    scan(&["-s", "t_h=600", "-s", "grid_max=1400"]);
    assert_eq!(count_dips(&curve()), 2);

    let jittered = ["-s", "jitter_s=30", "--seed", "7"];
    let a = scan(&jittered);
    let b = scan(&jittered);
    assert_eq!(a, b);
    let c = scan(&["-s", "jitter_s=30", "--seed", "8"]);
    assert_ne!(a, c);

    let header = std::fs::read_to_string(dir.path().join("scan_twofold.csv")).unwrap();
    assert!(header.starts_with("tv_um,r_ab,r_ac,r_bc\n"));
    let svg = std::fs::read_to_string(dir.path().join("scan.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("href"));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let run = |seed: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_noon"));
        cmd.args(["scan", "--out-dir", d, "-s", "jitter_s=30", "-s", "mc_samples=200", "-s", "svg=false"])
            .args(extra)
            .env_remove("NOON_SEED");
        if let Some(s) = seed {
            cmd.env("NOON_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join("scan.csv")).unwrap()
    };
    let env9 = run(Some("9"), &[]);
    assert_eq!(env9, run(None, &["--seed", "9"]));
    assert_ne!(env9, run(None, &[]));
    // the command line wins over the environment
    assert_eq!(run(Some("9"), &["--seed", "10"]), run(None, &["--seed", "10"]));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "# predict inputs\nbeta = 1\nea = 1\n").unwrap();
    let f = file.to_str().unwrap();
    let o = noon(&["predict", "-c", f]);
    assert!((json_number(&stdout(&o), "v3_overlapped") - 1.0).abs() < 1e-12);
    let o = noon(&["predict", "-c", f, "-s", "ea=0"]);
    assert!((json_number(&stdout(&o), "v3_overlapped") - 0.5).abs() < 1e-12);
    assert!(json_number(&stdout(&o), "v3_dip2").abs() < 1e-12);
    let o = noon(&["predict", "-s", "n=4", "-s", "m=2"]);
    assert!((json_number(&stdout(&o), "v_mk") - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn fit_reports_dips() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    dip_csv(&one, &[(0.91, 0.0, 185.0)]);
    let o = noon(&["fit", "-s", &format!("input={}", one.display())]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["dips"][0]["visibility"].as_f64().unwrap() - 0.91).abs() < 1e-6);
    assert!((v["dips"][0]["fwhh_um"].as_f64().unwrap() - 185.0).abs() < 1e-4);

    let two = dir.path().join("two.csv");
    dip_csv(&two, &[(0.46, 0.0, 190.0), (0.40, 600.0, 190.0)]);
    let input = format!("input={}", two.display());
    let o = noon(&["fit", "-s", &input, "-s", "n_dips=2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["dips"][0]["visibility"].as_f64().unwrap() - 0.46).abs() < 1e-6);
    assert!((v["dips"][1]["visibility"].as_f64().unwrap() - 0.40).abs() < 1e-6);

    // dip-2 inversion: E/A = 2 V / beta
    let o = noon(&["infer-ea", "-s", &input, "-s", "method=dip2", "-s", "beta=0.92"]);
    assert!((json_number(&stdout(&o), "ea") - 0.8 / 0.92).abs() < 1e-5);

    let flat = dir.path().join("flat.csv");
    dip_csv(&flat, &[]);
    let o = noon(&["fit", "-s", &format!("input={}", flat.display())]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dips"][0]["visibility"].as_f64().unwrap(), 0.0);
    assert!(!v["dips"][0]["determined"].as_bool().unwrap());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn dynmpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynmpi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(extra: Value) -> Value {
    let mut cfg = json!({
        "grid": {"recon": {"nx": 13, "ny": 13, "fov_width": 0.012, "fov_height": 0.012}},
        "partition": {"n_frames": 4}
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn simulate(dir: &Path, cfg: &Value) -> PathBuf {
    let config = write_config(dir, "config.json", cfg);
    let out = dir.join("data");
    let o = dynmpi(&["simulate", "--config", path(&config), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_levels(p: &Path) -> Vec<f64> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn full_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), &small_config(json!({})));
    let levels = tmp.path().join("levels/norm.csv");
    let o = dynmpi(&["estimate-levels", "--data", path(&data), "--method", "norm", "--out", path(&levels)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("levels/manifest.json").exists());
    assert_eq!(read_levels(&levels).len(), 4);

    let rec = tmp.path().join("rec");
    let o = dynmpi(&[
        "reconstruct", "--data", path(&data), "--algo", "resesop", "--levels", path(&levels), "--out", path(&rec),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["reconstruction.dirv", "reconstruction.pgm", "reconstruction.csv", "trace.csv", "info.json", "manifest.json"] {
        assert!(rec.join(f).exists(), "{f}");
    }

    let metrics = tmp.path().join("metrics.csv");
    let o = dynmpi(&["evaluate", "--rec", path(&rec), "--truth", path(&data), "--out", path(&metrics)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&metrics).unwrap();
    assert!(text.starts_with("cell_id,algorithm,estimator,scale,subsize,lambda,frame,mse,rel_l2,centroid_err\n"));
    assert_eq!(csv_column(&text, "frame"), vec!["2"]);
    let mse: f64 = csv_column(&text, "mse")[0].parse().unwrap();
    assert!(mse.is_finite() && mse > 0.0);
}

#[test]
fn evaluating_truth_against_itself_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), &small_config(json!({})));
    let metrics = tmp.path().join("m.csv");
    let o = dynmpi(&["evaluate", "--rec", path(&data), "--truth", path(&data), "--out", path(&metrics)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&metrics).unwrap();
    let mse = csv_column(&text, "mse");
    assert_eq!(mse.len(), 4);
    assert!(mse.iter().all(|m| m.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn commands_are_deterministic() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for tmp in [&one, &two] {
        let data = simulate(tmp.path(), &small_config(json!({})));
        let levels = tmp.path().join("lv/l.csv");
        assert!(dynmpi(&[
            "estimate-levels", "--data", path(&data), "--method", "interp", "--subsize", "1/4", "--zeta-noise", "0.15",
            "--seed", "7", "--out", path(&levels),
        ])
        .status
        .success());
        let rec = tmp.path().join("rec");
        assert!(dynmpi(&[
            "reconstruct", "--data", path(&data), "--algo", "resesop", "--levels", path(&levels), "--subsize", "1/4",
            "--out", path(&rec),
        ])
        .status
        .success());
        outputs.push((dir_contents(&data), fs::read(&levels).unwrap(), dir_contents(&rec)));
    }
    // Manifests record the (different) temporary paths; everything else must match.
    let strip = |v: &Vec<(String, Vec<u8>)>| v.iter().filter(|(n, _)| n != "manifest.json" && n != "info.json").cloned().collect::<Vec<_>>();
    assert_eq!(strip(&outputs[0].0), strip(&outputs[1].0));
    assert_eq!(outputs[0].1, outputs[1].1);
    assert_eq!(strip(&outputs[0].2), strip(&outputs[1].2));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(json!({"experiment": {"algorithms": ["reg-kaczmarz"], "lambdas": [2.0, 8.5]}}));
    let config = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("sweep");
    let o = dynmpi(&["sweep", "--config", path(&config), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv_column(&text, "lambda").len(), 2);
    assert!(out.join("traces/c000.csv").exists() && out.join("images/c001.pgm").exists());
    assert_eq!(fs::read_to_string(out.join("failures.txt")).unwrap(), "");
}

#[test]
fn failed_cells_exit_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    // The interpolated estimator needs subframe subproblems, so this cell fails.
    let cfg = small_config(json!({"experiment": {
        "algorithms": ["reg-kaczmarz", "resesop"],
        "lambdas": [8.5],
        "estimators": [{"method": "interp"}]
    }}));
    let config = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("sweep");
    let o = dynmpi(&["sweep", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv_column(&text, "mse"), vec![csv_column(&text, "mse")[0].clone(), "nan".to_string()]);
    assert!(fs::read_to_string(out.join("failures.txt")).unwrap().starts_with("c001:"));
}

#[test]
fn usage_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.json", &json!({"solver": {"lamda": 1.0}}));
    let o = dynmpi(&["simulate", "--config", path(&bad), "--out", path(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));

    let missing = tmp.path().join("nope.json");
    let o = dynmpi(&["simulate", "--config", path(&missing), "--out", path(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));

    let data = simulate(tmp.path(), &small_config(json!({})));
    let o = dynmpi(&["reconstruct", "--data", path(&data), "--algo", "resesop", "--out", path(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = dynmpi(&["estimate-levels", "--data", path(&data), "--method", "norm", "--subsize", "1/3", "--out", "l.csv"]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(data.join("frame_001.dirv"), b"DIRV").unwrap();
    let o = dynmpi(&["estimate-levels", "--data", path(&data), "--method", "norm", "--out", path(&tmp.path().join("l.csv"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn manifest_hash_tracks_config() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |name: &str, cfg: &Value| {
        let config = write_config(tmp.path(), &format!("{name}.json"), cfg);
        let out = tmp.path().join(name);
        assert!(dynmpi(&["simulate", "--config", path(&config), "--out", path(&out)]).status.success());
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    let base = small_config(json!({}));
    let a = hash("a", &base);
    let b = hash("b", &base);
    let mut changed = base.clone();
    changed["noise"] = json!({"snr": 20.0});
    let c = hash("c", &changed);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn level_options() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), &small_config(json!({})));
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["estimate-levels", "--data", path(&data), "--method", "norm", "--out", path(&out)];
        args.extend_from_slice(extra);
        let o = dynmpi(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_levels(&out)
    };
    let base = run("base.csv", &[]);
    let scaled = run("scaled.csv", &["--scale", "1e5"]);
    let noisy = run("noisy.csv", &["--zeta-noise", "0.15", "--seed", "3"]);
    for ((b, s), n) in base.iter().zip(&scaled).zip(&noisy) {
        assert!((s - 1e5 * b).abs() <= 1e-9 * s.abs());
        assert!((n - b).abs() <= 0.15 * b + 1e-12);
    }
    assert!(base[1..].iter().zip(&noisy[1..]).any(|(b, n)| b != n));

    let tmp2 = tempfile::tempdir().unwrap();
    let still = simulate(tmp2.path(), &small_config(json!({"phantom": {"frames_per_rotation": null}, "noise": {"snr": null}})));
    let out = tmp2.path().join("z.csv");
    assert!(dynmpi(&["estimate-levels", "--data", path(&still), "--method", "norm", "--out", path(&out)]).status.success());
    assert!(read_levels(&out).iter().all(|&z| z == 0.0));
}

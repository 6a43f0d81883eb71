use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sixv(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sixv"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("SIXV_THREADS", "2")
        .output()
        .expect("spawn sixv")
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_header(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

/// Every file except the manifest, which records wall time.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                v.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    v.sort();
    v
}

#[test]
fn verify_ybe_at_rational_point() {
    let d = tempfile::tempdir().unwrap();
    let o = sixv(d.path(), &["verify", "ybe", "--q", "1/4", "--u", "1/2", "--v", "3/4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("verify_ybe.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["passed"], true);
    let m = json(&d.path().join("manifest.json"));
    assert_eq!(m["status"], "done");
    assert_eq!(m["subcommand"], "verify");
    assert_eq!(m["config"]["Verify"]["q"], "1/4");
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bad_arguments_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    // clap usage errors
    assert_eq!(sixv(d.path(), &["verify", "ybe", "--bogus"]).status.code(), Some(2));
    assert_eq!(sixv(d.path(), &["nonsense"]).status.code(), Some(2));
    assert_eq!(sixv(d.path(), &["sample", "--q", "1/0"]).status.code(), Some(2));
    // domain errors
    let o = sixv(d.path(), &["verify", "ybe", "--q", "1/4", "--u", "3/4", "--v", "1/2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("u < v"));
    assert_eq!(json(&d.path().join("manifest.json"))["status"], "failed");
    assert_eq!(sixv(d.path(), &["sample", "--u", "1.5"]).status.code(), Some(1));
    assert_eq!(sixv(d.path(), &["current", "--R", "100000", "--replicates", "2"]).status.code(), Some(1));
}

#[test]
fn sample_outputs_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "7", "sample", "--boundary", "kpz", "--width", "24", "--height", "12", "--margin", "8", "--art"];
    for d in [&a, &b] {
        let o = sixv(d.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(outputs(a.path()), outputs(b.path()));
    let g = json(&a.path().join("grid.json"));
    assert_eq!(g["schema_version"], 1);
    assert_eq!(g["width"], 24);
    assert_eq!(csv_header(&a.path().join("summary.csv")), "quantity,index,value");
    assert!(a.path().join("grid.txt").exists());
    let c = sixv(b.path(), &["--seed", "8", "sample", "--boundary", "kpz", "--width", "24", "--height", "12"]);
    assert!(c.status.success());
    assert_ne!(fs::read(a.path().join("grid.json")).unwrap(), fs::read(b.path().join("grid.json")).unwrap());
}

#[test]
fn evolve_window_log_and_snapshots() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "3", "evolve", "--geometry", "window", "--R", "16", "--T", "0.5", "--snapshot-every", "0.25"];
    for d in [&a, &b] {
        let o = sixv(d.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(outputs(a.path()), outputs(b.path()));
    let log = json(&a.path().join("trajectory.json"));
    assert_eq!(log["schema_version"], 1);
    let ev = log["events"].as_array().unwrap();
    assert!(!ev.is_empty());
    let times: Vec<f64> = ev.iter().map(|e| e["time"].as_f64().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    let ts = fs::read_to_string(a.path().join("timeseries.csv")).unwrap();
    let lines: Vec<&str> = ts.lines().collect();
    assert_eq!(lines[0], "t,events,mean_height_change,vertical_density,seeds_a,seeds_b,seeds_c,overflows");
    assert_eq!(lines.len(), 4);
    assert!(a.path().join("snapshots/snapshot_00002.json").exists());
    // a snapshot can seed a new run
    let c = tempfile::tempdir().unwrap();
    let input = a.path().join("final.json");
    let o = sixv(c.path(), &["evolve", "--geometry", "window", "--R", "16", "--T", "0.1", "--no-log", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!c.path().join("trajectory.json").exists());
    let o = sixv(c.path(), &["evolve", "--geometry", "torus", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evolve_torus_and_quadrant() {
    let d = tempfile::tempdir().unwrap();
    let o = sixv(d.path(), &["evolve", "--geometry", "torus", "--R", "8", "--T", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&d.path().join("final.json"));
    assert_eq!(g["geometry"], "torus");
    let o = sixv(d.path(), &["evolve", "--geometry", "quadrant", "--u", "0.3", "--eta", "0.3", "--R", "20", "--T", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.path().join("final.json"))["geometry"], "quadrant");
}

#[test]
fn current_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["current", "--s", "0.3,1/2", "--replicates", "3", "--R", "16", "--T", "0.5"];
    for d in [&a, &b] {
        let o = sixv(d.path(), &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(outputs(a.path()), outputs(b.path()));
    let text = fs::read_to_string(a.path().join("current.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["s", "u", "q", "J_analytic", "J_measured", "stderr", "replicates", "excluded"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let j: f64 = rows[1][3].parse().unwrap();
    assert!((j + 4.0 / 9.0).abs() < 1e-12);
}

#[test]
fn aj_csv() {
    let d = tempfile::tempdir().unwrap();
    let o = sixv(d.path(), &["aj", "--width", "32", "--T", "0.3", "--runs", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = d.path().join("aj.csv");
    assert_eq!(csv_header(&p), "run,dominated,violations,aligned_violations,checks,a1_initial,a1_final");
    assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 5);
}

#[test]
fn hydro_meshes() {
    let d = tempfile::tempdir().unwrap();
    let o = sixv(d.path(), &["hydro", "burgers", "--u", "0.5", "--n", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = d.path().join("burgers.csv");
    assert_eq!(csv_header(&p), "x,y,rho");
    assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 401);
    let o = sixv(d.path(), &["hydro", "2plus1", "--n", "20", "--steps", "40"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_header(&d.path().join("heights.csv")), "x,y,H");
    let s = json(&d.path().join("hydro_summary.json"));
    assert!(s["sup_deviation"].as_f64().unwrap() < 0.2);
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["current", "--replicates", "4", "--R", "16", "--T", "0.5"];
    for (d, n) in [(&a, "1"), (&b, "3")] {
        let o = Command::new(env!("CARGO_BIN_EXE_sixv")).arg("--out").arg(d.path()).args(args).env("SIXV_THREADS", n).output().unwrap();
        assert!(o.status.success());
    }
    assert_eq!(outputs(a.path()), outputs(b.path()));
    assert_eq!(json(&b.path().join("manifest.json"))["threads"], 3);
}

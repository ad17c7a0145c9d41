use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kglab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kglab"));
    cmd.args(args);
    if let Some((path, text)) = config {
        fs::write(path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn thresholds_prints_exact_rationals() {
    let dir = scratch("thresholds");
    let out = dir.join("out");
    let o = run(&["thresholds", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("thresholds.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rows = v["result"]["optimized"].as_array().unwrap();
    assert_eq!(rows[0]["s_min"], "11/12");
    assert_eq!(rows[1]["s_min"], "15/16");
}

#[test]
fn same_seed_same_hashes() {
    let dir = scratch("determinism");
    let cfg = "kind = \"khinchin\"\n[khinchin]\ndraws = 2000\nj = 20\n";
    let hashes = |sub: &str, seed: &str| {
        let out = dir.join(sub);
        let o = run(&["khinchin", "--seed", seed, "--out", out.to_str().unwrap()], Some((&dir.join("k.toml"), cfg)));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(&out);
        let files: Vec<(String, String)> = m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
            .collect();
        for (p, _) in &files {
            assert!(out.join(p).exists());
        }
        (files, m["config_hash"].clone())
    };
    let a = hashes("a", "7");
    let b = hashes("b", "7");
    let c = hashes("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert_ne!(a.1, c.1);
}

#[test]
fn wrapping_horizon_rejected_before_compute() {
    let dir = scratch("horizon");
    let out = dir.join("out");
    let cfg = "kind = \"solve\"\n[grid]\nextent = 26.0\nn = 64\n[solve]\ndt = 0.01\nsteps = 2000\n";
    let o = run(&["solve", "--out", out.to_str().unwrap()], Some((&dir.join("s.toml"), cfg)));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("solve.steps") && err.contains("L/2"), "{err}");
    assert!(!out.exists());
}

#[test]
fn malformed_config_is_an_error() {
    let dir = scratch("malformed");
    let o = run(&["solve"], Some((&dir.join("m.toml"), "kind = \"solve\"\n[solve]\nstep = 3\n")));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
    let o = run(&["decay"], Some((&dir.join("n.toml"), "kind = \"solve\"\n")));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_rule_exits_two() {
    let dir = scratch("verdict");
    let out = dir.join("out");
    let cfg = "kind = \"khinchin\"\n[khinchin]\ndraws = 500\nmax_constant = 0.1\n";
    let o = run(&["khinchin", "--out", out.to_str().unwrap()], Some((&dir.join("v.toml"), cfg)));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(manifest(&out)["verdict"], false);
}

#[test]
fn csv_columns_are_documented() {
    let dir = scratch("schema");
    let out = dir.join("out");
    let cfg = "kind = \"maxineq\"\n[maxineq]\ndraws = 50\nj_grid = [10, 100]\n";
    let o = run(&["maxineq", "--out", out.to_str().unwrap()], Some((&dir.join("x.toml"), cfg)));
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("maxineq.schema.json")).unwrap()).unwrap();
    let csv = fs::read_to_string(out.join("maxineq.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let documented: Vec<&str> =
        schema[0]["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(header, documented);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let mantissa = first[1].split('e').next().unwrap();
    assert_eq!(mantissa.replace(['.', '-'], "").len(), 17);
}

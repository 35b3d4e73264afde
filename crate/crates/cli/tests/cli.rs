use std::process::{Command, Output};

fn ntxsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntxsim"))
        .args(args)
        .env_remove("NTXSIM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn offload_rows() {
    let o = ntxsim(&["offloads"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for row in ["802816,147,64,1843968", "602112,576,192,1806336", "50176,256,64,200704", "37632,512,192,100352"] {
        assert!(s.contains(row), "{s}");
    }
}

#[test]
fn verify_passes_and_is_deterministic() {
    let args = ["verify", "--instances", "66", "--seed", "7"];
    let a = ntxsim(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, ntxsim(&args).stdout);
    assert_eq!(json(&a)["suite"]["seed"], 7);
}

#[test]
fn seed_variable_overrides_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_ntxsim"))
        .args(["verify", "--instances", "11", "--seed", "1"])
        .env("NTXSIM_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(json(&o)["suite"]["seed"], 99);
}

#[test]
fn injected_fault_fails_with_a_name() {
    let o = ntxsim(&["verify", "--instances", "22", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("verification failed:") && err.len() > 30, "{err}");
}

#[test]
fn golden_model_rows() {
    for (arch, mode) in [("ntx64-28nm", "train"), ("ntx16-28nm", "inference")] {
        let o = ntxsim(&["model", "--network", "googlenet", "--arch", arch, "--mode", mode, "--golden", "--format", "json"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let v = json(&o);
        assert!(v["golden"].as_array().unwrap().iter().all(|c| c["tolerance"] == 0.15));
    }
}

#[test]
fn golden_without_reference_is_a_usage_error() {
    let o = ntxsim(&["model", "--network", "alexnet", "--golden"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_network_lists_names() {
    let o = ntxsim(&["model", "--network", "vgg16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resnet152"));
}

#[test]
fn empty_network_has_only_a_zero_total() {
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("empty_net.json");
    std::fs::write(&path, r#"{"name": "empty", "input": [3, 8, 8], "layers": []}"#).unwrap();
    let o = ntxsim(&["model", "--network", path.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 2, "{s}");
    assert!(lines[1].starts_with("total,,,0.0,"), "{s}");
}

#[test]
fn mesh_grid_contains_the_eight_by_eight_row() {
    let s = stdout(&ntxsim(&["mesh"]));
    assert!(s.starts_with("N,L_B,speedup,parallel_eff,energy_eff\n"));
    let row = s.lines().find(|l| l.starts_with("8,8192,")).unwrap();
    let speedup: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((speedup - 62.8).abs() < 0.628);
    assert_eq!(s.lines().count(), 1 + 16 * 6);
}

#[test]
fn sweep_flags_one_optimum_within_budget() {
    let s = stdout(&ntxsim(&["sweep", "--arch", "ntx64-28nm"]));
    let best: Vec<&str> = s.lines().filter(|l| l.ends_with(",true")).collect();
    assert_eq!(best.len(), 1);
    let power: f64 = best[0].split(',').nth(4).unwrap().parse().unwrap();
    assert!(power <= 25.0);
}

#[test]
fn datacenter_same_tdp() {
    let v = json(&ntxsim(&["datacenter", "--scenario", "same-tdp"]));
    assert_eq!(v["result"]["cubes"], 129);
    let tflops = v["result"]["total_peak"].as_f64().unwrap() / 1e12;
    assert!((tflops - 258.9).abs() < 0.05);
}

#[test]
fn datacenter_pue_override() {
    let base = json(&ntxsim(&["datacenter", "--scenario", "same-compute"]));
    let alt = json(&ntxsim(&["datacenter", "--scenario", "same-compute", "--pue-factor", "1.2"]));
    let (a, b) = (base["result"]["dollars_per_year"].as_f64().unwrap(), alt["result"]["dollars_per_year"].as_f64().unwrap());
    assert!((b / a - 1.2 / 1.12).abs() < 1e-12);
}

#[test]
fn trace_writes_its_files() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("trace_out");
    let o = ntxsim(&["trace", "--out-dir", dir.to_str().unwrap(), "--view", "bursts"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("bytes,count\n"));
    for f in ["summary.csv", "transitions.csv", "bursts.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn malformed_arguments_exit_two() {
    assert_eq!(ntxsim(&["trace", "--conv", "1,2,3"]).status.code(), Some(2));
    assert_eq!(ntxsim(&["sweep", "--arch", "ntx1000-7nm"]).status.code(), Some(2));
    assert_eq!(ntxsim(&["frobnicate"]).status.code(), Some(2));
}

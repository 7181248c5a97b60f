use std::path::Path;
use std::process::{Command, Output};

fn mpim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpim"))
        .args(args)
        .env_remove("MPIM_OUT_DIR")
        .output()
        .expect("run mpim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows (header comment and column header stripped) as field vectors.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(csv: &str, name: &str) -> usize {
    csv.lines().nth(1).unwrap().split(',').position(|c| c == name).unwrap()
}

#[test]
fn tmr_sweep_grid_has_six_rows() {
    let o = mpim(&[
        "tmr-sweep", "--bits", "8", "--p-gate", "1e-3,1e-4", "--modes", "none,serial,parallel", "--trials", "2000",
        "--seed", "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# mpim "));
    assert!(text.lines().next().unwrap().contains("seed=7"));
    let r = rows(&text);
    assert_eq!(r.len(), 6);
    let mode = column(&text, "mode");
    let modes: Vec<&str> = r.iter().map(|row| row[mode].as_str()).collect();
    assert_eq!(modes, ["none", "serial", "parallel", "none", "serial", "parallel"]);
}

#[test]
fn none_mode_once_per_point_with_two_votings() {
    let o = mpim(&[
        "tmr-sweep", "--p-gate", "1e-3", "--modes", "none,serial", "--voting", "min3,ideal", "--trials", "256",
    ]);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o)).len(), 3);
}

#[test]
fn degradation_baseline_point() {
    let o = mpim(&["degradation", "--p-input", "1e-9", "--T", "1e3", "--ecc", "none"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 1);
    let v: f64 = r[0][column(&text, "expected_corrupted")].parse().unwrap();
    assert!((v - 2.00e3).abs() <= 0.05 * 2.00e3, "{v}");
}

#[test]
fn nn_zero_p_mult_is_zero() {
    let o = mpim(&["nn", "--p-mult", "0", "--p-mask", "3e-4", "--M", "612e6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r[0][column(&text, "p_net")], "0.0");
}

#[test]
fn jobs_do_not_change_bytes() {
    let args = |jobs: &'static str| {
        [
            "tmr-sweep", "--bits", "8", "--p-gate", "1e-3,3e-4", "--modes", "none,serial,parallel,semi", "--trials",
            "3000", "--seed", "11", "--jobs", jobs,
        ]
    };
    let a = mpim(&args("1"));
    let b = mpim(&args("4"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_changes_hash_and_results() {
    let a = stdout(&mpim(&["mult", "--trials", "512", "--p-gate", "1e-2", "--seed", "1"]));
    let b = stdout(&mpim(&["mult", "--trials", "512", "--p-gate", "1e-2", "--seed", "2"]));
    assert_ne!(a.lines().next(), b.lines().next());
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let o = mpim(&["tmr-sweep", "--p-gate", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mpim(&["tmr-sweep", "--modes", "quad"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tmr_sweep.modes"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[tmr_sweep]\ntrails = 10\n").unwrap();
    let o = mpim(&["--config", cfg.to_str().unwrap(), "tmr-sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));

    let o = mpim(&["--config", "/nonexistent/x.toml", "nn"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mpim(&["mult", "--a", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mpim(&["ecc", "verify", "--n", "30", "--m", "16"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[nn]\np_mult = [1e-9, 1e-8]\np_mask = 3e-4\n").unwrap();
    let from_file = stdout(&mpim(&["--config", cfg.to_str().unwrap(), "nn"]));
    assert_eq!(rows(&from_file).len(), 2);
    assert!(from_file.lines().next().unwrap().contains("seed=5"));
    let overridden = stdout(&mpim(&["--config", cfg.to_str().unwrap(), "nn", "--p-mult", "1e-7", "--seed", "6"]));
    assert_eq!(rows(&overridden).len(), 1);
    assert!(overridden.lines().next().unwrap().contains("seed=6"));
}

#[test]
fn out_dir_env_and_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mpim"))
        .args(["nn", "--p-mult", "1e-9"])
        .env("MPIM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("nn.csv").exists());

    let explicit = dir.path().join("sub/x.json");
    let o = mpim(&["--format", "json", "--out", explicit.to_str().unwrap(), "nn", "--p-mult", "1e-9"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&explicit).unwrap()).unwrap();
    assert_eq!(v["meta"]["experiment"], "nn");
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn ecc_exit_codes() {
    let o = mpim(&["ecc", "verify", "--flips", "3:5,20:40"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&stdout(&o)).len(), 2);
    // Two flips in one block cannot be corrected.
    let o = mpim(&["ecc", "verify", "--flips", "3:5,4:5"]);
    assert_eq!(o.status.code(), Some(2));
    // Two banks leave the (i, j) / (i + m/2, j + m/2) pair ambiguous.
    let o = mpim(&["ecc", "verify", "--banks", "2", "--flips", "0:0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("ambiguous,0:0;8:8"));

    let o = mpim(&["ecc", "inject", "--flips", "5:3"]);
    assert_eq!(o.status.code(), Some(0));
    let o = mpim(&["ecc", "inject", "--flips", "0:0,0:1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains(",true,"));
}

#[test]
fn ecc_overhead_rows() {
    let o = mpim(&["ecc", "overhead", "--n", "16,32,64"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 6);
    let (d, nv) = (column(&text, "diagonal_cycles"), column(&text, "naive_cycles"));
    for pair in r.chunks(2) {
        let row_ratio = pair[0][d].parse::<f64>().unwrap() / pair[0][nv].parse::<f64>().unwrap();
        let col_ratio = pair[1][d].parse::<f64>().unwrap() / pair[1][nv].parse::<f64>().unwrap();
        assert!(col_ratio < row_ratio);
    }
}

#[test]
fn netlist_round_trip_through_mult() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m4.net");
    let o = mpim(&["mult", "--bits", "4", "--dump-netlist", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let o = mpim(&["mult", "--bits", "4", "--netlist", path.to_str().unwrap(), "--a", "13", "--b", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(",13,11,143,143,true,"));

    // A 4-bit netlist is rejected for 8-bit multiplication.
    let o = mpim(&["mult", "--bits", "8", "--netlist", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(Path::new(&path).exists());
}

#[test]
fn gates_truth_tables() {
    let o = mpim(&["gates"]);
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 2 + 4 + 4 + 4 + 8);
    assert!(r.contains(&vec!["gates".into(), "MIN3".into(), "110".into(), "0".into()]));
    assert!(r.contains(&vec!["gates".into(), "NOR2".into(), "00".into(), "1".into()]));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(mpim(&["--help"]).status.code(), Some(0));
    assert_eq!(mpim(&["--version"]).status.code(), Some(0));
    assert_eq!(mpim(&[]).status.code(), Some(1));
}

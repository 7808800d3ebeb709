use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ringnoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringnoc")).args(args).output().unwrap()
}

fn short() -> Vec<&'static str> {
    vec!["--k", "4", "--warmup", "200", "--measure", "2000"]
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_run_prints_one_row() {
    let mut args = short();
    args.extend(["--design", "base2", "--rate", "0.05"]);
    let out = ringnoc(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("design,pattern,k,rate,seed,"));
    let rows = rows(&text);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][..4], ["base2", "uniform", "4", "0.05"]);
    assert_eq!(rows[0][10], "false");
}

#[test]
fn sweep_rows_in_increasing_rate_order() {
    let mut args = short();
    args.extend(["--sweep", "0.05:0.05:0.3"]);
    let out = ringnoc(&args);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(3));
    let rates: Vec<f64> = rows(&String::from_utf8(out.stdout).unwrap())
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(rates, [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    fs::write(&trace, "0,0,1,1\n").unwrap();
    let cases: [Vec<&str>; 4] = [
        vec!["--sweep", "0.1:0.1:0.2", "--trace", path(&trace)],
        vec!["--bogus"],
        vec!["--design", "torus"],
        vec!["--rate", "1.5"],
    ];
    for args in cases {
        let out = ringnoc(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn unknown_config_key_names_line() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "k = 4\nwidgets = 3\n").unwrap();
    let out = ringnoc(&["--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2") && err.contains("widgets"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small mesh\ndesign = base1\nk = 4\nrate = 0.02\nwarmup = 100\nmeasure = 1000\nseed = 9\n",
    )
    .unwrap();
    let out = ringnoc(&["--config", path(&cfg), "--design", "ring"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(&rows[0][..5], ["ring", "uniform", "4", "0.02", "9"]);
}

#[test]
fn compare_normalizes_to_base1() {
    let mut args = vec!["compare"];
    args.extend(short());
    args.extend(["--rate", "0.02"]);
    let out = ringnoc(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",normalized_latency"));
    let rows = rows(&text);
    let designs: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(designs, ["base1", "base2", "ring"]);
    let norm: Vec<f64> = rows.iter().map(|r| r[11].parse().unwrap()).collect();
    assert_eq!(norm[0], 1.0);
    assert!(norm[2] < norm[1] && norm[1] < 1.0, "{norm:?}");
}

#[test]
fn trace_file_replayed() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    fs::write(&trace, "# cycle,src,dest,size\n0,0,15,2\n3,5,10,1\n3,6,6,3\n").unwrap();
    let out = ringnoc(&["--k", "4", "--trace", path(&trace)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "trace");
    assert_eq!(rows[0][5], "3");

    fs::write(&trace, "0,0,99,1\n").unwrap();
    let out = ringnoc(&["--k", "4", "--trace", path(&trace)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_spec_same_file() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for file in [&a, &b] {
        let mut args = short();
        args.extend([
            "--pattern",
            "hotspot",
            "--sweep",
            "0.1:0.1:0.4",
            "--seed",
            "5",
            "--out",
            path(file),
        ]);
        let out = ringnoc(&args);
        assert!(out.stdout.is_empty());
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

//! End-to-end runs of the `rbm` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn rbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rbm-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// CSV rows below the comment header and the column header.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let args = ["two-masses", "simulate", "--gamma", "0.1", "--steps", "5", "--seed", "7"];
    let (a, b) = (rbm(&args), rbm(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("# rbm "));
    assert!(text.contains("seed=7") && text.contains("gamma=0.1"));
    assert_eq!(text.lines().nth(1), Some("step,speed"));
    assert_eq!(rows(&text).len(), 5);
    let other = rbm(&["two-masses", "simulate", "--gamma", "0.1", "--steps", "5", "--seed", "8"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn spectrum_reports_the_second_eigenvalue() {
    let out = rbm(&["two-masses", "spectrum", "--gamma", "0.1", "--grid-n", "200", "--v-max", "6"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().nth(1), Some("index,eigenvalue"));
    let r = rows(&text);
    assert_eq!(r[0][0], 1.0);
    assert!((r[0][1] - 1.0).abs() < 1e-3);
    assert!((r[1][1] - 0.9606).abs() < 0.005, "second eigenvalue {}", r[1][1]);
}

#[test]
fn gap_scan_schema() {
    let out = rbm(&["two-masses", "gap-scan", "--gammas", "0.05,0.1,0.15", "--grid-n", "100"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().nth(1), Some("gamma,gap,four_gamma_sq"));
    for row in rows(&text) {
        assert!((row[2] - 4.0 * row[0] * row[0]).abs() < 1e-15);
        assert!((row[1] / row[2] - 1.0).abs() < 0.15);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let path = scratch("run.conf");
    std::fs::write(&path, "# test run\ngamma = 0.2\nsteps = 3\nseed = 11\n").unwrap();
    let conf = path.to_str().unwrap();
    let text = stdout(&rbm(&["two-masses", "simulate", "--config", conf, "--steps", "4"]));
    assert!(text.contains("gamma=0.2") && text.contains("seed=11") && text.contains("steps=4"));
    assert_eq!(rows(&text).len(), 4);
}

#[test]
fn output_file() {
    let path = scratch("chain.csv");
    let out = rbm(&["spring", "simulate", "--steps", "10", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rows(&text).len(), 10);
    assert!(rows(&text).iter().all(|r| r[1] > 0.0));
}

#[test]
fn every_subcommand_runs() {
    let runs: [&[&str]; 8] = [
        &["two-masses", "kernel", "--grid-n", "10"],
        &["two-masses", "evolve", "--grid-n", "100"],
        &["two-masses", "moments", "--samples", "10000"],
        &["cell", "simulate", "--cell", "notch", "--samples", "100"],
        &["cell", "spectrum", "--bins", "10", "--samples-per-node", "1000"],
        &["gibbs", "sample-wall", "--samples", "100", "--sampler", "sequential"],
        &["gibbs", "sample-stationary", "--dim", "2", "--samples", "100"],
        &["cell", "simulate", "--cell", "flat", "--theta", "0.3", "--samples", "5"],
    ];
    for args in runs {
        let out = rbm(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        let widths: Vec<usize> = text.lines().skip(1).map(|l| l.split(',').count()).collect();
        assert!(widths.len() > 1 && widths.iter().all(|w| *w == widths[0]), "{args:?}");
    }
    // the flat cell reflects specularly
    let text = stdout(&rbm(&["cell", "simulate", "--cell", "flat", "--theta", "0.3", "--samples", "5"]));
    assert!(rows(&text).iter().all(|r| (r[2] - 0.3).abs() < 1e-12));
}

#[test]
fn cell_file_round_trip() {
    let path = scratch("notch.csv");
    let notch = rbm_core::BilliardCell::notch();
    std::fs::write(&path, notch.to_csv()).unwrap();
    let args = ["cell", "simulate", "--samples", "50", "--seed", "3"];
    let from_file = rbm(&[&args[..], &["--cell-file", path.to_str().unwrap()]].concat());
    let built_in = rbm(&[&args[..], &["--cell", "notch"]].concat());
    assert!(from_file.status.success());
    let body = |o: &Output| stdout(o).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&from_file), body(&built_in));
}

#[test]
fn argument_errors_exit_with_2() {
    let path = scratch("bad.conf");
    std::fs::write(&path, "colour = red\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["two-masses", "teleport"],
        &["two-masses", "spectrum", "--gamma", "-1"],
        &["two-masses", "simulate", "--steps", "many"],
        &["two-masses", "simulate", "--config", path.to_str().unwrap()],
        &["cell", "simulate", "--cell", "hexagon"],
        &["two-masses", "spectrum", "--grid-n", "5", "--eigenvalues", "9"],
    ];
    for args in cases {
        let out = rbm(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numeric_failures_exit_with_3() {
    // two nodes cannot hold the kernel's mass near the origin
    let out = rbm(&["two-masses", "evolve", "--grid-n", "2", "--v-max", "0.5", "--init-lo", "0", "--init-hi", "0.4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical failure"));
}

//! End-to-end runs of the `levy-greeks` binary.

use levy_greeks::cli::CSV_HEADER;
use levy_greeks::oracle::{self, Contract, ContractKind};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn levy_greeks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-greeks")).args(args).env("LEVY_GREEKS_WORKERS", "1").output().unwrap()
}

fn write_config(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

const GBM: &str = "[model]
name = geometric-levy
x0 = 100
gamma = -0.02
sigma1 = 0.2
sigma2 = 0

[levy]
family = compound-poisson-gaussian
intensity = 1
mean = 0
sd = 0.1

[grid]
T = 1
n_steps = 64

[payoff]
kind = call
strike = 100

[run]
n_paths = 20000
seed = 7
greeks = delta
mode = diffusion-only
";

#[test]
fn validate_echoes_shipped_configs() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = levy_greeks(&["validate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), text(&out.stderr));
        assert_eq!(text(&out.stdout), std::fs::read_to_string(&path).unwrap());
        assert!(text(&out.stderr).starts_with("status,check,value,floor\n"));
    }
}

#[test]
fn zero_steps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, &GBM.replace("n_steps = 64", "n_steps = 0"));
    let out = levy_greeks(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 16"), "{}", text(&out.stderr));
}

#[test]
fn untruncated_tempered_stable_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let levy = "[levy]\nfamily = tempered-stable\nscale = 1\nstability = 0.5\nlambda_pos = 3\nlambda_neg = 3\ndelta = 0\n";
    let body = GBM.replace("[levy]\nfamily = compound-poisson-gaussian\nintensity = 1\nmean = 0\nsd = 0.1\n", levy);
    let out = levy_greeks(&["validate", &write_config(&dir, &body)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("infinite activity"), "{}", text(&out.stderr));
}

#[test]
fn degenerate_diffusion_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, &GBM.replace("sigma1 = 0.2", "sigma1 = 0"));
    let out = levy_greeks(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).lines().any(|l| l.starts_with("FAIL,elliptic_diffusion,")), "{}", text(&out.stderr));
}

#[test]
fn greeks_csv_layout_and_black_scholes_delta() {
    let dir = tempfile::tempdir().unwrap();
    let out = levy_greeks(&["greeks", &write_config(&dir, GBM)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "delta");
    let (lo, hi): (f64, f64) = (row[4].parse().unwrap(), row[5].parse().unwrap());
    let contract = Contract { kind: ContractKind::Call, strike: 100.0, maturity: 1.0 };
    let bs = oracle::black_scholes(100.0, 0.2, -0.02, &contract).unwrap().delta;
    assert!(lo <= bs && bs <= hi, "[{lo}, {hi}] misses {bs}");
    assert!(lines.last().unwrap().starts_with("# config_sha256="));
}

#[test]
fn json_output_parses_and_out_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, GBM);
    let target = dir.path().join("greeks.json");
    let out = levy_greeks(&["greeks", &cfg, "--format", "json", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert!(v.to_string().contains("\"delta\""));
}

#[test]
fn unsupported_weight_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = GBM.replace("greeks = delta", "greeks = vega(sigma1)").replace("diffusion-only", "jump-only");
    let out = levy_greeks(&["greeks", &write_config(&dir, &body)]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
}

#[test]
fn merton_oracle_compare_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("merton.cfg")).unwrap().replace("n_paths = 100000", "n_paths = 40000");
    let out = levy_greeks(&["oracle-compare", &write_config(&dir, &body)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
    assert!(text(&out.stdout).lines().filter(|l| !l.starts_with('#')).skip(1).all(|l| l.ends_with(",PASS")));
}

#[test]
fn seeded_runs_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, GBM);
    let strip = |o: Output| -> Vec<String> {
        text(&o.stdout)
            .lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 10).map(|(_, c)| c).collect::<Vec<_>>().join(","))
            .collect()
    };
    let a = strip(levy_greeks(&["greeks", &cfg, "--seed", "11"]));
    let b = strip(levy_greeks(&["greeks", &cfg, "--seed", "11"]));
    let c = strip(levy_greeks(&["greeks", &cfg, "--seed", "12"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

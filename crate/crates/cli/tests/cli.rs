use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|f| f.parse::<f64>().unwrap()).collect()).collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sideways_g2_matches_closed_form_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = cascade(&[
        "g2", "--channel", "sideways", "--out", s(dir.path()),
        "--kappa", "10", "--gamma", "1", "--eps-d", "1", "--focusing", "0.7", "--n-fock", "5",
        "--set", "numerics.tau_max=8", "--set", "numerics.tau_steps=80",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("g2_sideways.csv"));
    assert_eq!(header, ["gamma_tau", "g2_numeric", "g2_analytic"]);
    assert_eq!(rows.len(), 81);
    assert!(rows.iter().all(|r| (r[1] - r[2]).abs() < 1e-4));
    let m = manifest(dir.path());
    assert_eq!(m["tool"], "cascade");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["job"]["command"], "g2");
    assert_eq!(m["job"]["channel"], "sideways");
    assert_eq!(m["config"]["params"]["kappa"], 10.0);
    assert_eq!(m["config"]["numerics"]["n_fock"], 5);
}

#[test]
fn csv_numbers_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = cascade(&["figure", "fig3", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("fig3a_focusing0.2.csv")).unwrap();
    let field = text.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{field}");
}

#[test]
fn fig3_emits_eight_curves() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cascade(&["figure", "fig3", "--out", s(dir.path())])), 0);
    let m = manifest(dir.path());
    let curves = m["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 8);
    let focusing: Vec<f64> = curves.iter().map(|c| c["params"]["focusing"].as_f64().unwrap()).collect();
    assert_eq!(focusing, [0.2, 0.3, 0.4, 0.5, 0.7, 0.75, 0.8, 0.82]);
    let (_, rows) = read_csv(&dir.path().join("fig3b_focusing0.7.csv"));
    let min = rows.iter().min_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((min[0] - 4.0 * (0.7f64 / 0.3).ln()).abs() < 0.05);
}

#[test]
fn replay_reproduces_outputs_bit_for_bit() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = cascade(&[
        "trajectory", "--out", s(first.path()),
        "--g", "1", "--kappa", "1", "--gamma", "1", "--gamma-s", "0.5", "--eps-d", "0.4", "--focusing", "0.5",
        "--n-fock", "8", "--t-end", "2", "--sample-dt", "0.2", "--ensemble", "3", "--scheme", "jump",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(first.path());
    let outputs: Vec<String> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert!(outputs.contains(&"trajectory_seed2.csv".to_string()));
    assert!(outputs.contains(&"ensemble.csv".to_string()));
    let o = cascade(&["replay", s(&first.path().join("manifest.json")), "--out", s(second.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in outputs.iter().map(String::as_str).chain(["manifest.json"]) {
        assert_eq!(fs::read(first.path().join(f)).unwrap(), fs::read(second.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[params]\nkappa = 20.0\ngamma = 1.0\neps_d = 3.0\nfocusing = 0.4\n\n[numerics]\nn_fock = 6\nomega_steps = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = cascade(&["spectrum", "--config", s(&cfg), "--focusing", "0.3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["params"]["kappa"], 20.0);
    assert_eq!(m["config"]["params"]["focusing"], 0.3);
    let (header, rows) = read_csv(&out.join("spectrum.csv"));
    assert_eq!(header, ["omega", "incoherent_numeric", "incoherent_analytic"]);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| (r[1] - r[2]).abs() < 1e-3));
}

#[test]
fn unknown_keys_and_bad_flags_are_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[params]\nkapa = 2.0\n").unwrap();
    assert_eq!(code(&cascade(&["steady-state", "--config", s(&cfg), "--out", s(dir.path())])), 4);
    assert_eq!(code(&cascade(&["steady-state", "--set", "numerics.nfock=3", "--out", s(dir.path())])), 4);
    assert_eq!(code(&cascade(&["steady-state", "--no-such-flag"])), 4);
    assert_eq!(code(&cascade(&["figure", "fig9"])), 4);
    assert_eq!(code(&cascade(&["steady-state", "--focusing", "1.5", "--out", s(dir.path())])), 4);
}

#[test]
fn inadequate_truncation_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = cascade(&["steady-state", "--eps-d", "3", "--n-fock", "3", "--gamma", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("truncation") && err.contains("\"eps_d\":3.0"), "{err}");
}

#[test]
fn steady_state_and_meanfield_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = cascade(&["steady-state", "--kappa", "1", "--eps-d", "0.3", "--gamma", "1", "--focusing", "0.5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("steady_state.json")).unwrap()).unwrap();
    assert!((summary["n"].as_f64().unwrap() - 0.09).abs() < 1e-8);
    let o = cascade(&[
        "meanfield", "--g", "3", "--kappa", "1", "--eps-d", "2", "--gamma", "1", "--focusing", "0.5",
        "--set", "numerics.meanfield_alpha_im=0.01", "--set", "numerics.meanfield_t_end=200", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("meanfield.csv"));
    assert_eq!(header[0], "t");
    // γₛ = 0: the intracavity Bloch vector stays on the unit sphere.
    assert!(rows.iter().all(|r| (4.0 * (r[3] * r[3] + r[4] * r[4]) + r[5] * r[5] - 1.0).abs() < 1e-8));
    let branches: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("neoclassical.json")).unwrap()).unwrap();
    assert_eq!(branches["field_branches"].as_array().unwrap().len(), 2);

    let o = cascade(&["meanfield", "--kappa", "1", "--eps-d", "2", "--gamma", "1", "--focusing", "0.5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("meanfield.csv"));
    let last = rows.last().unwrap();
    assert!((last[1] - 2.0).abs() < 1e-8 && last[2].abs() < 1e-8);
}

#[test]
fn validate_exit_codes() {
    let o = cascade(&["validate", "--fast"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = cascade(&["validate", "--fast", "--inject-failure"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

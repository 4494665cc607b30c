use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qmarkov::ChainModel;
use qmarkov_cli::model::{digest, load_model, ModelFile};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qmarkov"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], model: &Path) -> Output {
    bin().args(args).arg(model).arg("--plain").output().unwrap()
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const BENCHMARK: &str = r#"{"builtin": "xy", "a": 0.6, "b": 0.8, "f": 0.0, "theta0": 1.0471975511965979}"#;

fn balanced(theta0: f64) -> String {
    let s = 0.5f64.sqrt();
    format!(r#"{{"builtin": "xy", "a": {s}, "b": {s}, "theta0": {theta0}}}"#)
}

#[test]
fn builtin_xy_has_two_exchange_entries() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let loaded = load_model(&path, None).unwrap();
    let h = loaded.model.hamiltonian().matrix();
    // i|1⟩⟨0| ⊗ |0⟩⟨1| − i|0⟩⟨1| ⊗ |1⟩⟨0| with index atom * 2 + system
    let idx = |atom: usize, system: usize| atom * 2 + system;
    for r in 0..4 {
        for c in 0..4 {
            let expected = if (r, c) == (idx(1, 0), idx(0, 1)) {
                (0.0, 1.0)
            } else if (r, c) == (idx(0, 1), idx(1, 0)) {
                (0.0, -1.0)
            } else {
                (0.0, 0.0)
            };
            assert_eq!((h[(r, c)].re, h[(r, c)].im), expected, "entry ({r}, {c})");
        }
    }
    let psi = loaded.model.input().amplitudes();
    assert!((psi[0].re - 0.6).abs() < 1e-15 && (psi[1].re - 0.8).abs() < 1e-15);
    assert_eq!(loaded.digest, digest(BENCHMARK.as_bytes()));
}

#[test]
fn unnormalized_input_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "bad.json", r#"{"builtin": "xy", "a": 0.6, "b": 0.7, "theta0": 1.0}"#);
    assert!(load_model(&path, None).is_err());
    let out = run(&["analyze"], &path);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("a, b: a^2 + b^2"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn explicit_file_round_trips_bit_identically() {
    let dir = TempDir::new().unwrap();
    let model = ChainModel::xy(0.6, 0.8, 0.3, 1.1).unwrap();
    let model = model
        .with_hamiltonian(model.hamiltonian().scaled(0.37).shifted(0.11))
        .unwrap();
    let first = ModelFile::from_model(&model).emit().unwrap();
    let path = write(&dir, "explicit.json", &first);
    let loaded = load_model(&path, None).unwrap();
    assert_eq!(ModelFile::from_model(&loaded.model).emit().unwrap(), first);
    assert_eq!(loaded.model.hamiltonian(), model.hamiltonian());
    assert_eq!(loaded.model.theta0().to_bits(), model.theta0().to_bits());
    assert_eq!(ModelFile::parse(&first).unwrap(), loaded.file);
}

#[test]
fn qfi_curve_is_quadratic_at_zero_coupling() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy0.json", &balanced(0.0));
    let out = bin().args(["qfi-curve", "--n", "12", "--plain"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n [atoms],F_n [rad^-2],F_n_per_atom [rad^-2 per atom]");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 12);
    for (i, row) in rows.iter().enumerate() {
        let n = (i + 1) as f64;
        assert_eq!(row[0], n);
        assert!((row[1] - n * (n + 1.0)).abs() / (n * (n + 1.0)) < 1e-4, "n = {n}: {}", row[1]);
        assert!((row[2] - row[1] / n).abs() < 1e-12 * row[2]);
    }
}

#[test]
fn analyze_at_zero_coupling_is_not_mixing() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let out = bin().args(["analyze", "--cos-theta0", "1", "--plain"]).arg(&path).output().unwrap();
    let r = report(&out);
    assert_eq!(r["results"]["mixing"], Value::Bool(false));
    assert!(!r["warnings"].as_array().unwrap().is_empty());

    let r = report(&run(&["analyze"], &path));
    assert_eq!(r["results"]["mixing"], Value::Bool(true));
    assert!(r["results"]["spectral_gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn stationary_commands_refuse_non_mixing_models() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy0.json", &balanced(0.0));
    for cmd in ["qfi", "cfi", "clt", "lan", "perturb-check"] {
        let out = run(&[cmd], &path);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("needs a mixing chain"), "{cmd}");
    }
}

#[test]
fn qfi_report_compares_general_and_closed_form() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let r = report(&run(&["qfi"], &path));
    let res = &r["results"];
    let f = res["quantum_fisher"].as_f64().unwrap();
    let closed = res["closed_form"].as_f64().unwrap();
    let rel = res["relative_difference"].as_f64().unwrap();
    assert!((rel - (f - closed).abs() / closed).abs() < 1e-15);
    // 16a⁴b⁴ / ((1 − c)(1 − c + 4a²b²c)) at a = 0.6, b = 0.8, c = 0.5
    let (a2, b2, c) = (0.36, 0.64, 0.5);
    let oracle = 16.0 * a2 * a2 * b2 * b2 / ((1.0 - c) * (1.0 - c + 4.0 * a2 * b2 * c));
    assert!((closed - oracle).abs() < 1e-12);
    assert_eq!(res["reference_value"]["value"].as_f64(), Some(5.03));
    assert_eq!(res["reference_value"]["status"], "unreconciled");
    assert_eq!(r["units"]["quantum_fisher"], "rad^-2 per atom");
    assert_eq!(r["seed"], Value::Null);
}

#[test]
fn monte_carlo_is_seed_reproducible() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let args = ["simulate", "--n", "300", "--trajectories", "8", "--u", "0.5", "--seed", "42"];
    let a = run(&args, &path);
    let b = run(&args, &path);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r["seed"].as_u64(), Some(42));
    assert_eq!(r["results"]["time_averages"].as_array().unwrap().len(), 8);

    let other = run(&["simulate", "--n", "300", "--trajectories", "8", "--u", "0.5", "--seed", "43"], &path);
    let r2: Value = serde_json::from_slice(&other.stdout).unwrap();
    assert_ne!(r["results"]["time_averages"], r2["results"]["time_averages"]);
}

#[test]
fn scan_writes_csv_with_units_and_report() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let csv_path = dir.path().join("scan.csv");
    let out = bin()
        .args(["scan-observables", "--n", "11", "--plain", "--out"])
        .arg(&csv_path)
        .arg(&path)
        .output()
        .unwrap();
    let r = report(&out);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n_x [1],n_y [1],n_z [1],value [rad^-2 per atom]");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len() as u64, r["results"]["grid_points"].as_u64().unwrap());
    let f = r["results"]["quantum_fisher"].as_f64().unwrap();
    for row in &rows {
        let norm = row[0] * row[0] + row[1] * row[1] + row[2] * row[2];
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(row[3] <= f + 1e-8);
    }
    // row-major: n_y outer, n_z inner
    assert!(rows.windows(2).all(|w| w[0][1] < w[1][1] || (w[0][1] == w[1][1] && w[0][2] < w[1][2])));
    assert_eq!(r["results"]["dominated_by_quantum_fisher"], Value::Bool(true));
}

#[test]
fn invalid_flag_combinations_fail() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let out = run(&["cfi", "--observable", "x", "--nx", "1"], &path);
    assert!(!out.status.success());
    let out = run(&["analyze", "--cos-theta0", "1.5"], &path);
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn report_goes_to_out_file() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "xy.json", BENCHMARK);
    let target = dir.path().join("cfi.json");
    let out = bin()
        .args(["cfi", "--nx", "1", "--nz", "-1", "--plain", "--out"])
        .arg(&target)
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(r["command"], "cfi");
    let cfi = r["results"]["classical_fisher"].as_f64().unwrap();
    assert!(cfi > 0.0 && cfi <= r["results"]["quantum_fisher"].as_f64().unwrap());
}

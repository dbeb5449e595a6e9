use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_liouville-lab"));
    c.env_remove("LIOUVILLE_LAB_OUT");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(dir.join("out")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn check_matrix_exit_codes() {
    let t = TempDir::new().unwrap();
    let good = write(t.path(), "a.toml", "matrix = [[1.0, 0.5], [0.5, 1.0]]\n");
    assert_eq!(code(&run(t.path(), &["check-matrix", "--config", &good])), 0);
    let doc = json(t.path(), "check-matrix.json");
    assert_eq!(doc["schema"], "liouville-lab/1");
    for q in doc["result"]["q"].as_array().unwrap() {
        assert!((q.as_f64().unwrap() - 16.0 * PI / 3.0).abs() < 1e-12);
    }

    let identity = write(t.path(), "i.toml", "matrix = [[1.0, 0.0], [0.0, 1.0]]\n");
    assert_eq!(code(&run(t.path(), &["check-matrix", "--config", &identity])), 1);

    let broken = write(t.path(), "b.toml", "matrix = [[1.0, 0.5]\n");
    assert_eq!(code(&run(t.path(), &["check-matrix", "--config", &broken])), 2);
    let unknown = write(t.path(), "u.toml", "matrix = [[1.0]]\ncolour = 3\n");
    assert_eq!(code(&run(t.path(), &["check-matrix", "--config", &unknown])), 2);
    assert_eq!(code(&run(t.path(), &["check-matrix", "--config", "missing.toml"])), 2);
}

#[test]
fn solve_entire_closed_form() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["solve-entire"])), 0);
    let doc = json(t.path(), "solve-entire.json");
    let s = &doc["result"]["summary"];
    assert!((s["sigma"][0].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!((s["c"][0].as_f64().unwrap() - 2.0 * 8f64.ln()).abs() < 1e-4);
    assert_eq!(doc["result"]["mode"], "integrate");
    let csv = fs::read_to_string(t.path().join("out/profile.csv")).unwrap();
    assert!(csv.starts_with("r,"));
}

#[test]
fn solve_entire_overflow_is_numeric_failure() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "big.toml", "u0 = [1000.0]\n");
    let o = run(t.path(), &["solve-entire", "--config", &cfg]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("r ="));
}

#[test]
fn target_sigma_routes_to_shooting() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "s.toml", "matrix = [[2.0, 1.0], [1.0, 2.0]]\n");
    // 4Σσ = Σ a σσ with σ = (s, s): 8s = 6s² → s = 4/3
    let o = run(t.path(), &["solve-entire", "--config", &cfg, "--target-sigma", "1.3333333333333333,1.3333333333333333"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(t.path(), "solve-entire.json");
    assert_eq!(doc["result"]["mode"], "shoot");
    for s in doc["result"]["summary"]["sigma"].as_array().unwrap() {
        assert!((s.as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn pohozaev_check_and_alias() {
    let t = TempDir::new().unwrap();
    for name in ["pohozaav-check", "pohozaev-check"] {
        assert_eq!(code(&run(t.path(), &[name])), 0);
        let doc = json(t.path(), "pohozaev-check.json");
        let e = doc["result"]["decay"]["exponent"].as_f64().unwrap();
        assert!((e + 4.0).abs() < 0.1, "{e}");
    }
}

#[test]
fn kernel_dimensions() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["kernel", "--max-mode", "3"])), 0);
    let doc = json(t.path(), "kernel.json");
    let dims: Vec<u64> = doc["result"]["dimensions"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(dims[0] >= 1);
    assert_eq!(&dims[1..], &[1, 0, 0]);
    assert!(doc["result"]["mode1_kernel"]["residual"].as_f64().unwrap() < 1e-6);

    assert_eq!(code(&run(t.path(), &["kernel", "--max-mode", "0"])), 0);
    let doc = json(t.path(), "kernel.json");
    // φ = r u' + 2 tends to 2 − l = −2
    let end = doc["result"]["mode0_kernel"]["endpoint"][0].as_f64().unwrap();
    assert!((end + 2.0).abs() < 1e-3, "{end}");
    assert!(doc["result"]["mode1_kernel"].is_null());
}

#[test]
fn green_torus_report() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "g.toml", "[tail]\nm = [2.5]\np = [0.3, 0.6]\n");
    assert_eq!(code(&run(t.path(), &["green-torus", "--config", &cfg])), 0);
    let doc = json(t.path(), "green-torus.json");
    let r = &doc["result"];
    assert!(r["ewald_max_difference"].as_f64().unwrap() < 1e-10);
    for g in r["grad1_gamma"].as_array().unwrap() {
        assert!(g.as_f64().unwrap().abs() < 1e-10);
    }
    // the second default pair coincides: G is absent, γ is finite
    assert!(r["pairs"][1]["green"].is_null());
    assert!(r["pairs"][1]["gamma"].as_f64().unwrap().is_finite());
    assert!(r["tail"][0]["relative_difference"].as_f64().unwrap() < 1e-3);

    let bad = write(t.path(), "bad.toml", "lattice = [[2.0, 0.0], [0.0, 1.0]]\n");
    assert_eq!(code(&run(t.path(), &["green-torus", "--config", &bad])), 2);
}

const CRITICAL: &str = "name = \"critical\"\nmatrix = [[1.0]]\nrho_over_pi = [8.0]\n";

#[test]
fn leading_term_critical_constant() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.toml", CRITICAL);
    let o = run(t.path(), &["leading-term", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("regime: Critical"));
    let doc = json(t.path(), "critical.json");
    let c = doc["result"]["report"]["log_corrected_fit"]["constant"].as_f64().unwrap();
    let expected = 16.0 * PI * PI * 2.0 * PI * 64.0;
    assert!(c < 0.0);
    assert!((c.abs() / expected - 1.0).abs() < 1e-6, "{c}");
    assert_eq!(doc["result"]["report"]["leading_order_only"], true);
    assert!(t.path().join("out/critical-series.csv").exists());
}

#[test]
fn leading_term_subcritical_exponent() {
    let t = TempDir::new().unwrap();
    let rho2 = 3.0 * PI + PI * 21f64.sqrt();
    let cfg = write(
        t.path(),
        "s.toml",
        &format!("name = \"sub\"\nmatrix = [[1.0, 0.5], [0.5, 1.0]]\nrho = [{:e}, {:e}]\n", 2.0 * PI, rho2),
    );
    assert_eq!(code(&run(t.path(), &["leading-term", "--config", &cfg])), 0);
    let doc = json(t.path(), "sub.json");
    let r = &doc["result"]["report"];
    let m = r["m"].as_f64().unwrap();
    assert!((m - 2.8956).abs() < 1e-4);
    assert!((r["fitted_exponent"].as_f64().unwrap() - (m - 2.0)).abs() < 1e-6);
}

#[test]
fn leading_term_rejects_bad_inputs() {
    let t = TempDir::new().unwrap();
    let off = write(t.path(), "off.toml", "matrix = [[1.0]]\nrho = [20.0]\n");
    assert_eq!(code(&run(t.path(), &["leading-term", "--config", &off])), 1);
    let mixed = write(t.path(), "mixed.toml", &format!("{CRITICAL}rho_sequence = [[25.2], [25.0]]\n"));
    assert_eq!(code(&run(t.path(), &["leading-term", "--config", &mixed])), 1);
    let cfg = write(t.path(), "c.toml", CRITICAL);
    assert_eq!(code(&run(t.path(), &["leading-term", "--config", &cfg, "--eps-list", "0.01,0.02"])), 2);
}

#[test]
fn deterministic_json_and_env_override() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "c.toml", CRITICAL);
    let mut docs = Vec::new();
    for (k, jobs) in ["1", "2"].iter().enumerate() {
        let dir = t.path().join(format!("env{k}"));
        let o = bin()
            .env("LIOUVILLE_LAB_OUT", &dir)
            .args(["--jobs", jobs, "leading-term", "--config", &cfg])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        docs.push(fs::read(dir.join("critical.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn order_fit_from_csv() {
    let t = TempDir::new().unwrap();
    let mut text = String::from("eps,value\n");
    for k in 0..6 {
        let e = 10f64.powf(-2.0 - 0.4 * k as f64);
        text.push_str(&format!("{e:e},{:e}\n", 3.0 * e * e));
    }
    let input = write(t.path(), "s.csv", &text);
    assert_eq!(code(&run(t.path(), &["order-fit", "--input", &input])), 0);
    let doc = json(t.path(), "order-fit.json");
    assert!((doc["result"]["fit"]["exponent"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    let short = write(t.path(), "short.csv", "eps,value\n0.1,1\n0.01,2\n");
    assert_eq!(code(&run(t.path(), &["order-fit", "--input", &short])), 2);
}

#[test]
fn emit_flags() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["--no-csv", "solve-entire"])), 0);
    assert!(t.path().join("out/solve-entire.json").exists());
    assert!(!t.path().join("out/profile.csv").exists());
    assert_eq!(code(&run(t.path(), &["--no-json", "pohozaev-check"])), 0);
    assert!(!t.path().join("out/pohozaev-check.json").exists());
    assert_eq!(code(&run(t.path(), &["no-such-command"])), 2);
}

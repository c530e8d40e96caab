use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pairspec(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairspec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(path: &Path) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(doc["digest"].as_str().unwrap().len(), 64);
    assert!(doc["conventions"].as_str().unwrap().contains("kappa"));
    doc["report"].clone()
}

/// Data lines of a CSV output, after the digest comment and the header.
fn csv_rows(path: &Path) -> (String, Vec<String>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let tag = lines.next().unwrap();
    assert!(tag.starts_with("# digest=") && tag.contains(" conventions="), "{tag}");
    let header = lines.next().unwrap().to_string();
    (header, lines.map(str::to_string).collect())
}

#[test]
fn fourier_writes_one_row_per_momentum() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["fourier", "--potential", "yukawa", "--mu", "1", "--pmax", "10", "--pcount", "200"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(header, "p,V_tilde");
    assert_eq!(rows.len(), 200);
    // 4π/(p² + μ²) at p = 0
    let v0: f64 = rows[0].split(',').nth(1).unwrap().parse().unwrap();
    assert!((v0 / (4.0 * std::f64::consts::PI) - 1.0).abs() < 1e-7);
}

#[test]
fn fourier_theorem_report_passes_for_r4_tail() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["fourier", "--potential", "r4tail", "--verify-theorem"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("theorem.json"));
    assert_eq!(r["pass"], true);
    assert!(r["relative_deviation"].as_f64().unwrap() < 0.02);
}

#[test]
fn malformed_specs_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["fourier", "--potential", "{\"type\": \"yukawa\", \"mu\": "]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`potential`"), "{}", stderr(&o));

    let o = pairspec(dir.path(), &["fourier", "--potential", r#"{"type": "yukawa", "mu": "one"}"#]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`mu`"), "{}", stderr(&o));

    let o = pairspec(dir.path(), &["fourier", "--potential", r#"{"mu": 1}"#]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`type`"), "{}", stderr(&o));

    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"potential": {"type": "gaussian"}, "sweep": {"p_count": "many"}}"#).unwrap();
    let o = pairspec(dir.path(), &["fourier", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`sweep.p_count`"), "{}", stderr(&o));

    let o = pairspec(dir.path(), &["fourier", "--potential", "gaussian", "--pcount", "1"]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("spectrum.csv").exists());
}

#[test]
fn config_file_drives_the_run_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("gauss.json");
    std::fs::write(&spec, r#"{"type": "gaussian", "amplitude": 2.0}"#).unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"potential": "gauss.json", "sweep": {"p_max": 4, "p_count": 9}, "output": {"format": "json"}}"#,
    )
    .unwrap();
    let o = pairspec(dir.path(), &["fourier", "--config", cfg.to_str().unwrap(), "--pcount", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(doc["columns"], serde_json::json!(["p", "V_tilde"]));
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][0], 4.0);
    let v0 = rows[0][1].as_f64().unwrap();
    assert!((v0 / (2.0 * std::f64::consts::PI.powf(1.5)) - 1.0).abs() < 1e-7, "{v0}");
}

#[test]
fn torus_exports_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["torus", "--potential", "bump", "--nmax", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("coefficients.csv"));
    assert_eq!(header, "n1,n2,n3,v_q");
    assert_eq!(rows.len(), 27);

    let o = pairspec(dir.path(), &["torus", "--potential", "yukawa"]);
    assert_eq!(code(&o), 2, "a long-range potential does not fit the unit box");
}

#[test]
fn pairfield_solution_has_zero_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["pairfield", "--statistics", "fermi", "--potential", "bump", "--k1", "1,0,0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("residual.json"));
    assert_eq!(r["pass"], true);
    let omega = r["omega"].as_f64().unwrap();
    assert!(r["residual"]["sup_residual_first"].as_f64().unwrap() <= 1e-8 * omega.abs());
    let (header, rows) = csv_rows(&dir.path().join("pairfield.csv"));
    assert_eq!(header, "n1,n2,n3,re_phi,im_phi,b");
    assert!(!rows.is_empty());
}

#[test]
fn variational_sweep_reports_limit_and_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["variational", "--statistics", "bose", "--potential", "gaussian"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("spectra.csv"));
    assert_eq!(header, "l_x,l_y,l_z,k2_x,k2_y,k2_z,branch,re_lambda,im_lambda,real");
    assert_eq!(rows.len(), 4 * 8);
    let limit = report(&dir.path().join("limit.json"));
    assert!(limit["order"].as_f64().unwrap() >= 1.0);
    let d = report(&dir.path().join("discrepancy.json"));
    assert_eq!(d["entries"].as_array().unwrap().len(), 8);

    let o = pairspec(dir.path().join("f").as_path(), &["variational", "--statistics", "fermi", "--potential", "gaussian", "--k2", "0,0.1,0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!dir.path().join("f/discrepancy.json").exists());
}

#[test]
fn fermi_reference_curve_has_maxon_and_roton() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["dispersion", "--statistics", "fermi", "--potential", "reference"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("curve.csv"));
    assert_eq!(header, "p,epsilon");
    assert_eq!(rows.len(), 200);
    let f = report(&dir.path().join("features.json"));
    let maxon = f["maxon"]["p"].as_f64().unwrap();
    let roton = f["roton"]["p"].as_f64().unwrap();
    assert!(maxon < roton);
    for key in ["sound_slope", "critical_velocity", "predicted_slope", "kappa"] {
        assert!(f[key].is_number(), "{key}");
    }
}

#[test]
fn attractive_bose_curve_flags_instability_and_drift_adds_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(
        dir.path(),
        &["dispersion", "--statistics", "bose", "--potential", r#"{"type": "yukawa", "g": -1}"#, "--v", "0.1,0,0"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("curve.csv"));
    assert_eq!(header, "p,epsilon,lambda,unstable");
    assert!(rows.iter().any(|r| r.ends_with(",1")));

    let o = pairspec(dir.path(), &["dispersion", "--statistics", "bose", "--potential", "gaussian"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("curve.csv"));
    assert_eq!(header, "p,epsilon,unstable");
    assert!(rows.iter().all(|r| r.ends_with(",0")));
}

#[test]
fn landau_reports_free_lattice_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["landau", "--potential", "zero", "--lattice"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("landau.json"));
    assert_eq!(r["critical_velocity_lattice"]["value"], 0.5);
}

#[test]
fn outputs_are_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["dispersion", "--statistics", "fermi", "--potential", "reference", "--pcount", "50"];
    for (sub, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let mut a = args.to_vec();
        a.extend(["--workers", workers]);
        let o = pairspec(&dir.path().join(sub), &a);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for file in ["curve.csv", "features.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
        assert_eq!(a, std::fs::read(dir.path().join("c").join(file)).unwrap(), "{file}");
    }
    // a different configuration carries a different digest
    let o = pairspec(&dir.path().join("d"), &["dispersion", "--statistics", "fermi", "--potential", "reference", "--pcount", "51"]);
    assert_eq!(code(&o), 0);
    let tag = |sub: &str| std::fs::read_to_string(dir.path().join(sub).join("curve.csv")).unwrap().lines().next().unwrap().to_string();
    assert_ne!(tag("a"), tag("d"));
}

#[test]
fn verify_filters_suites_and_reports_faults() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(&dir.path().join("one"), &["verify", "--suite", "potentials", "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = report(&dir.path().join("one/summary.json"));
    assert_eq!(s["pass"], true);
    assert_eq!(s["suites"].as_array().unwrap().len(), 1);
    assert_eq!(s["suites"][0]["suite"], "potentials");

    let o = pairspec(&dir.path().join("two"), &["verify", "--suite", "potentials", "--workers", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(dir.path().join("one/summary.json")).unwrap(),
        std::fs::read(dir.path().join("two/summary.json")).unwrap()
    );

    let o = pairspec(&dir.path().join("bad"), &["verify", "--suite", "pairfield", "--corrupt-phi"]);
    assert_eq!(code(&o), 1);
    let s = report(&dir.path().join("bad/summary.json"));
    assert_eq!(s["pass"], false);
    assert_eq!(s["failed"], serde_json::json!(["hamiltonian_residual"]));

    let o = pairspec(&dir.path().join("x"), &["verify", "--suite", "nonsense"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`suite`"));
}

#[test]
fn verify_passes_on_default_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["verify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = report(&dir.path().join("summary.json"));
    assert_eq!(s["pass"], true);
    assert_eq!(s["suites"].as_array().unwrap().len(), 5);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairspec(dir.path(), &["fourier", "--potential", "gaussian", "--pmax", "ten"]);
    assert_eq!(code(&o), 2);
    let o = pairspec(dir.path(), &["fourier", "--potential", "gaussian", "--hbar", "-1"]);
    assert_eq!(code(&o), 2);
    let o = pairspec(dir.path(), &["dispersion", "--potential", "gaussian", "--v", "1,2"]);
    assert_eq!(code(&o), 2);
}

use std::path::Path;
use std::process::{Command, Output};

use foliation_core::diffusion::{self, SimReport};
use foliation_core::foliation::{CharacteristicPointReport, LeafTrace, PointClass, Termination};
use foliation_core::geometry::ChartId;
use foliation_core::models::{self, RegistryEntry};
use serde_json::Value;

fn foliate(args: &[&str], out: &Path) -> Output {
    foliate_env(args, out, &[])
}

fn foliate_env(args: &[&str], out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_foliate"));
    cmd.args(args).arg("--out").arg(out);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run foliate")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn classify_points(dir: &Path) -> Vec<CharacteristicPointReport> {
    serde_json::from_value(read_json(&dir.join("classify.json"))["points"].clone()).unwrap()
}

fn manifest_paths(dir: &Path) -> Vec<String> {
    let m = read_json(&dir.join("manifest.json"));
    m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap().to_string()).collect()
}

#[test]
fn classify_paraboloid_finds_one_focus() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["classify", "--surface", "paraboloid", "--a", "1"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pts = classify_points(tmp.path());
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].class, PointClass::EllipticFocus);
    assert!(pts[0].location.x().iter().all(|v| v.abs() < 1e-10));
    assert_eq!(manifest_paths(tmp.path()), ["classify.json"]);
}

#[test]
fn classify_saddle_eigenvalues() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["classify", "--surface", "hyperbolic-paraboloid", "--a", "1"], tmp.path());
    assert_eq!(code(&o), 0);
    let pts = classify_points(tmp.path());
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].class, PointClass::HyperbolicSaddle);
    let mut ev = pts[0].real_eigenvalues().unwrap();
    ev.sort_by(f64::total_cmp);
    assert!((ev[0] + 0.5).abs() < 1e-8 && (ev[1] - 1.5).abs() < 1e-8, "{ev:?}");
}

#[test]
fn classify_su2_sphere_finds_both_poles() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["classify", "--surface", "su2-sphere", "--k", "1"], tmp.path());
    assert_eq!(code(&o), 0);
    let mut z: Vec<f64> = classify_points(tmp.path()).iter().map(|r| r.location.coords[2]).collect();
    z.sort_by(f64::total_cmp);
    assert_eq!(z.len(), 2);
    assert!((z[0] + 1.0).abs() < 1e-10 && (z[1] - 1.0).abs() < 1e-10, "{z:?}");
}

#[test]
fn degenerate_only_classification_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"surface": {"custom": {
            "chart": "heisenberg",
            "x1": ["1", "0", "-y/2"], "x2": ["0", "1", "x/2"], "x0": ["0", "0", "1"],
            "u": "z - h*x*y", "params": {"h": 0.5}}}}"#,
    )
    .unwrap();
    let o = foliate(&["--config", cfg.to_str().unwrap(), "classify"], &tmp.path().join("out"));
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let pts = classify_points(&tmp.path().join("out"));
    assert!(!pts.is_empty() && pts.iter().all(|p| p.class == PointClass::Degenerate));
}

#[test]
fn custom_paraboloid_classifies_like_the_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"surface": {"custom": {
            "chart": "heisenberg",
            "x1": ["1", "0", "-y/2"], "x2": ["0", "1", "x/2"], "x0": ["0", "0", "1"],
            "u": "z - a*(x^2 + y^2)", "params": {"a": 1}}}}"#,
    )
    .unwrap();
    let o = foliate(&["--config", cfg.to_str().unwrap(), "classify"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pts = classify_points(tmp.path());
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].class, PointClass::EllipticFocus);
    assert!((pts[0].eigenvalues[0].re - 0.5).abs() < 1e-10 && (pts[0].eigenvalues[0].im.abs() - 2.0).abs() < 1e-10);
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&foliate(&["classify", "--surface", "torus"], tmp.path())), 1);
    assert_eq!(code(&foliate(&["classify", "--surface", "paraboloid", "--a", "-1"], tmp.path())), 1);
    assert_eq!(code(&foliate(&["classify", "--frobnicate"], tmp.path())), 1);
    assert_eq!(code(&foliate(&["classify"], tmp.path())), 1);
    assert_eq!(code(&foliate(&["sim", "--process", "ou"], tmp.path())), 1);
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"surface": {"name": "paraboloid"}, "trace": {"strats": []}}"#).unwrap();
    assert_eq!(code(&foliate(&["--config", cfg.to_str().unwrap(), "classify"], tmp.path())), 1);
    let o = foliate_env(&["classify", "--surface", "paraboloid"], tmp.path(), &[("FOLIATION_THREADS", "zero")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn trace_without_starts_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["trace", "--surface", "paraboloid"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--start"));
}

#[test]
fn paraboloid_traces_follow_log_spirals() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["trace", "--surface", "paraboloid", "--a", "1", "--leaves", "8", "--max-length", "3"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q: f64 = 17.0;
    for i in 0..8 {
        let f = std::fs::File::open(tmp.path().join(format!("leaf_{i}.csv"))).unwrap();
        let t = LeafTrace::read_csv(f, ChartId::Heisenberg, 1, Termination::MaxLength).unwrap();
        assert!(t.len() > 10);
        let p0 = t.samples[0].point.coords;
        let r0 = p0[0].hypot(p0[1]);
        let psi = p0[1].atan2(p0[0]) - 4.0 * r0.ln();
        let mut worst: f64 = 0.0;
        for sm in &t.samples {
            let p = sm.point.coords;
            let s = p[0].hypot(p[1]) * q.sqrt();
            if s < 1e-3 {
                continue;
            }
            worst = worst.max(models::spiral_leaf(1.0, psi, s).unwrap().dist(&sm.point));
        }
        assert!(worst <= 1e-5, "leaf {i}: {worst:e}");
    }
    let paths = manifest_paths(tmp.path());
    assert!(paths.contains(&"leaf_7.csv".to_string()) && paths.contains(&"trace.json".to_string()));
}

#[test]
fn sphere_traces_keep_a_constant_bearing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(
        &["trace", "--surface", "spheroid", "--a", "1", "--c", "1", "--start", "0.6,0,0.8", "--start", "0,-0.8,-0.6"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..2 {
        let f = std::fs::File::open(tmp.path().join(format!("leaf_{i}.csv"))).unwrap();
        let t = LeafTrace::read_csv(f, ChartId::Heisenberg, 1, Termination::MaxLength).unwrap();
        let angles: Vec<f64> = t
            .samples
            .iter()
            .map(|sm| {
                let [x, y, z, _] = sm.point.coords;
                let (th, ph) = (z.acos(), y.atan2(x));
                let e_th = [th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin()];
                let v = sm.hat_x;
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                ((v[0] * e_th[0] + v[1] * e_th[1] + v[2] * e_th[2]) / n).acos()
            })
            .collect();
        let mean = angles.iter().sum::<f64>() / angles.len() as f64;
        let var = angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / angles.len() as f64;
        assert!(var <= 1e-8, "leaf {i}: variance {var:e}");
    }
}

#[test]
fn ops_reports_five_rows_per_point_and_small_riccati_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["ops", "--surface", "paraboloid", "--a", "1", "--n-points", "6"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 6);
    let conv = read_json(&tmp.path().join("convergence.json"));
    let orders: Vec<f64> = serde_json::from_value(conv["empirical_order"].clone()).unwrap();
    assert_eq!(orders.len(), 4);
    assert!(orders.iter().all(|o| *o >= 0.5), "{orders:?}");
    let curv = read_json(&tmp.path().join("curvature.json"));
    assert!(curv["max_riccati_residual"].as_f64().unwrap() <= 1e-6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("riccati max residual"));
}

#[test]
fn curvature_on_each_model_space() {
    for (surface, param) in [("paraboloid", "--a"), ("su2-sphere", "--k"), ("sl2-plane", "--k")] {
        let tmp = tempfile::tempdir().unwrap();
        let o = foliate(&["curvature", "--surface", surface, param, "1", "--n-points", "5"], tmp.path());
        assert_eq!(code(&o), 0, "{surface}: {}", String::from_utf8_lossy(&o.stderr));
        let curv = read_json(&tmp.path().join("curvature.json"));
        assert_eq!(curv["n_points"], 5);
        assert!(curv["max_riccati_residual"].as_f64().unwrap() <= 1e-6, "{surface}");
        assert_eq!(std::fs::read_to_string(tmp.path().join("curvature.csv")).unwrap().lines().count(), 6);
    }
}

#[test]
fn boundary_verdicts() {
    let cases: [(&[&str], &str); 3] = [
        (&["--surface", "paraboloid", "--a", "1"], "Inaccessible"),
        (&["--surface", "hyperbolic-paraboloid", "--a", "1", "--leaf", "x-axis"], "Accessible"),
        (&["--surface", "hyperbolic-paraboloid", "--a", "0.25", "--leaf", "y-axis"], "Inaccessible"),
    ];
    for (args, verdict) in cases {
        let tmp = tempfile::tempdir().unwrap();
        let mut full = vec!["boundary"];
        full.extend_from_slice(args);
        let o = foliate(&full, tmp.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let b = read_json(&tmp.path().join("boundary.json"));
        assert_eq!(b["boundary"]["verdict"], verdict, "{args:?}");
        assert_eq!(b["boundary"]["disagreement"], false);
    }
}

#[test]
fn bessel3_hit_fraction_matches_minimum_law() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["sim", "--process", "bessel3", "--s0", "1", "--paths", "1000", "--hit-times"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: SimReport = serde_json::from_value(read_json(&tmp.path().join("sim.json"))).unwrap();
    let expected = diffusion::bessel3_hit_probability(1e-3, 1.0, 10.0);
    assert!(rep.wilson_ci_95.0 <= expected && expected <= rep.wilson_ci_95.1, "{:?} vs {expected}", rep.wilson_ci_95);
    let rows = std::fs::read_to_string(tmp.path().join("hit_times.csv")).unwrap().lines().count();
    assert_eq!(rows, 1001);
    assert_eq!(manifest_paths(tmp.path()), ["sim.json", "hit_times.csv"]);
}

#[test]
fn leaf_sim_is_reproducible_across_thread_counts() {
    let args = [
        "sim", "--surface", "hyperbolic-paraboloid", "--a", "1", "--leaf", "x-axis", "--leaf-distance", "6", "--s0",
        "0.5", "--paths", "300", "--seed", "11",
    ];
    let reports: Vec<SimReport> = ["1", "3"]
        .iter()
        .map(|n| {
            let tmp = tempfile::tempdir().unwrap();
            let o = foliate_env(&args, tmp.path(), &[("FOLIATION_THREADS", n)]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            serde_json::from_value(read_json(&tmp.path().join("sim.json"))).unwrap()
        })
        .collect();
    assert_eq!(reports[0].deterministic_json().unwrap(), reports[1].deterministic_json().unwrap());
    assert_eq!(reports[0].config.master_seed, 11);
    assert!(reports[0].hit_fraction > 0.95);
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let out = tmp.path().join("from-config");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "output_dir": out,
            "master_seed": 5,
            "sim": {"process": "bessel:3", "s0": 0.5, "n_paths": 50, "t_max": 0.5, "dt": 1e-3}
        })
        .to_string(),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_foliate")).args(["--config", cfg.to_str().unwrap(), "sim"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: SimReport = serde_json::from_value(read_json(&out.join("sim.json"))).unwrap();
    assert_eq!((rep.config.master_seed, rep.config.n_paths, rep.config.s0), (5, 50, 0.5));

    let o2 = foliate(&["--config", cfg.to_str().unwrap(), "--seed", "6", "sim", "--paths", "20"], &tmp.path().join("flags"));
    assert_eq!(code(&o2), 0);
    let rep: SimReport = serde_json::from_value(read_json(&tmp.path().join("flags/sim.json"))).unwrap();
    assert_eq!((rep.config.master_seed, rep.config.n_paths, rep.config.s0), (6, 20, 0.5));
}

#[test]
fn list_models_prints_the_registry() {
    let tmp = tempfile::tempdir().unwrap();
    let o = foliate(&["list-models"], tmp.path());
    assert_eq!(code(&o), 0);
    let entries: Vec<RegistryEntry> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(entries.len(), models::registry().len());
    assert!(entries.iter().any(|e| e.name == "su2-sphere"));
}

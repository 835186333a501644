use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use berwald_cli::RunConfig;
use berwald_core::kernel::Vec3;
use berwald_core::metrics::finsler_norm;

const MINKOWSKI: &str = r#"
[manifold]
domain = { min = [-0.5, -0.5, -0.5], max = [0.5, 0.5, 0.5] }
metric = { kind = "quartic", epsilon = 0.1 }

[quadrature]
n_theta = 16
n_phi = 32

[sample]
lattice = [2, 2, 1]
random = 2
"#;

const GRADIENT: &str = r#"
[manifold]
domain = { min = [-0.4, -0.4, -0.4], max = [0.4, 0.4, 0.4] }
metric = { kind = "quartic", epsilon = 0.3, gradient = [2.0, 0.0, 0.0] }

[quadrature]
n_theta = 16
n_phi = 32

[sample]
lattice = [1, 1, 1]
"#;

fn berwald(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_berwald")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _, stderr) = berwald(&args);
    assert!(code != 1, "{command} failed: {stderr}");
    code
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(berwald(&[]).0, 1);
    assert_eq!(berwald(&["analyze"]).0, 1);
    assert_eq!(berwald(&["bogus", "--config", "x.toml"]).0, 1);
    let missing = dir.path().join("missing.toml");
    let (code, _, stderr) = berwald(&["analyze", "--config", missing.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("cannot read config"), "{stderr}");
    let bad = write_config(dir.path(), "bad.toml", &MINKOWSKI.replace("quartic", "sextic"));
    assert_eq!(berwald(&["analyze", "--config", bad.to_str().unwrap()]).0, 1);
    let bad = write_config(dir.path(), "range.toml", &MINKOWSKI.replace("epsilon = 0.1", "epsilon = -2.0"));
    let (code, _, stderr) = berwald(&["classify", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("-1/sqrt(3)"), "{stderr}");
    let (code, stdout, _) = berwald(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("verify-connection"));
}

#[test]
fn analyze_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "m.toml", MINKOWSKI);
    let out = dir.path().join("out");
    assert_eq!(run("analyze", &config, &out, &[]), 0);
    let json = fs::read(out.join("analyze.json")).unwrap();
    let csv = fs::read(out.join("analyze.csv")).unwrap();
    assert_eq!(run("analyze", &config, &out, &[]), 0);
    assert_eq!(json, fs::read(out.join("analyze.json")).unwrap());
    assert_eq!(csv, fs::read(out.join("analyze.csv")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["tool"]["name"], "berwald");
    assert_eq!(report["command"], "analyze");
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["verdict"], "classical_berwald_zero_curvature");
    assert_eq!(report["points"].as_array().unwrap().len(), 6);
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("x,y,z,gamma_11"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "m.toml", MINKOWSKI);
    let out = dir.path().join("out");
    assert_eq!(run("analyze", &config, &out, &["--seed", "11", "--n-phi", "24"]), 0);
    let first = fs::read_to_string(out.join("analyze.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    let echo: RunConfig = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(echo.sample.seed, 11);
    assert_eq!(echo.quadrature.n_phi, 24);
    // the echo, written back as TOML, replays to the same bytes without any flags
    let replay = write_config(dir.path(), "echo.toml", &toml::to_string(&echo).unwrap());
    assert_eq!(run("analyze", &replay, &out, &[]), 0);
    assert_eq!(first, fs::read_to_string(out.join("analyze.json")).unwrap());
}

#[test]
fn inconsistent_metric_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "g.toml", GRADIENT);
    let out = dir.path().join("out");
    assert_eq!(run("analyze", &config, &out, &[]), 2);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("analyze.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "inconsistent");
    assert_eq!(report["exit_code"], 2);
    assert!(report["summary"]["max_consistency"].as_f64().unwrap() > 1e-2);
}

#[test]
fn verify_connection_flags_a_wrong_torsion_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let good = write_config(dir.path(), "good.toml", MINKOWSKI);
    assert_eq!(run("verify-connection", &good, &out, &[]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify-connection.json")).unwrap()).unwrap();
    assert!(report["max_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(report["torsion"]["source"], "recovered");

    let wrong = write_config(dir.path(), "wrong.toml", &format!("{MINKOWSKI}\n[connection]\nf = 0.5\n"));
    assert_eq!(run("verify-connection", &wrong, &out, &[]), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify-connection.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(report["max_drift_per_length"].as_f64().unwrap() > 1e-3);
}

#[test]
fn transport_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{MINKOWSKI}\n[transport]\nv0 = [1.0, 0.0, 0.0]\ncurve = {{ kind = \"segment\", start = [0.0, 0.0, 0.0], displacement = [0.2, 0.1, 0.0] }}\n"
    );
    let config = write_config(dir.path(), "t.toml", &text);
    let out = dir.path().join("out");
    assert_eq!(run("transport", &config, &out, &[]), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("transport.json")).unwrap()).unwrap();
    // flat connection: the vector does not move
    let endpoint: Vec<f64> = serde_json::from_value(report["endpoint"].clone()).unwrap();
    assert!((Vec3::from_vec(endpoint) - Vec3::x()).amax() < 1e-12);
    let trajectory = report["trajectory"].as_array().unwrap();
    assert_eq!(trajectory.len(), report["steps"].as_u64().unwrap() as usize + 1);
    assert!((report["length"].as_f64().unwrap() - 0.05f64.sqrt()).abs() < 1e-12);
}

fn export(text: &str, extra: &[&str]) -> (RunConfig, Vec<Vec3>, serde_json::Value) {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "e.toml", text);
    let out = dir.path().join("out");
    assert_eq!(run("export-indicatrix", &config, &out, extra), 0);
    let obj = fs::read_to_string(out.join("indicatrix.obj")).unwrap();
    let vertices = obj
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let c: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            Vec3::new(c[0], c[1], c[2])
        })
        .collect();
    let faces = obj.lines().filter(|l| l.starts_with("f ")).count();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("indicatrix.json")).unwrap()).unwrap();
    assert_eq!(summary["faces"].as_u64().unwrap() as usize, faces);
    (RunConfig::from_toml(text).unwrap(), vertices, summary)
}

#[test]
fn euclidean_indicatrix_is_the_unit_sphere() {
    let text = r#"
[manifold]
domain = { min = [-1.0, -1.0, -1.0], max = [1.0, 1.0, 1.0] }
metric = { kind = "euclidean" }
[quadrature]
n_theta = 10
n_phi = 20
"#;
    let (_, vertices, summary) = export(text, &["--point", "0.3,-0.2,0.1"]);
    assert_eq!(vertices.len(), 10 * 20 + 2);
    assert!(vertices.iter().all(|v| (v.norm() - 1.0).abs() <= 1e-10));
    assert_eq!(summary["point"], serde_json::json!([0.3, -0.2, 0.1]));
}

#[test]
fn trifocal_indicatrix_is_an_axial_ovaloid() {
    let text = r#"
[manifold]
domain = { min = [-1.0, -1.0, -1.0], max = [1.0, 1.0, 1.0] }
metric = { kind = "trifocal", beta = [0.0, 0.0, 0.6], c = 3.0 }
[quadrature]
n_theta = 12
n_phi = 16
"#;
    let (_, vertices, summary) = export(text, &[]);
    assert!(summary["radius_ratio"].as_f64().unwrap() > 1.05);
    // radii are constant along each latitude ring
    for ring in vertices[1..vertices.len() - 1].chunks(16) {
        let r0 = ring[0].norm();
        assert!(ring.iter().all(|v| (v.norm() - r0).abs() < 1e-10));
    }
}

#[test]
fn quartic_indicatrix_has_octahedral_symmetry() {
    let text = r#"
[manifold]
domain = { min = [-1.0, -1.0, -1.0], max = [1.0, 1.0, 1.0] }
metric = { kind = "quartic", epsilon = 0.1 }
[quadrature]
n_theta = 8
n_phi = 12
"#;
    let (config, vertices, summary) = export(text, &[]);
    assert!(summary["radius_ratio"].as_f64().unwrap() > 1.01);
    let metric = config.metric().unwrap();
    let p = Vec3::zeros();
    for v in &vertices {
        for perm in [[1, 0, 2], [0, 2, 1], [2, 1, 0], [1, 2, 0]] {
            let u = Vec3::new(v[perm[0]], v[perm[1]], -v[perm[2]]);
            let radius = u.norm() / finsler_norm(metric.as_ref(), &p, &u).unwrap();
            assert!((radius - v.norm()).abs() < 1e-10);
        }
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let config = RunConfig::load(&path).unwrap();
            config.validate().unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            config.metric().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

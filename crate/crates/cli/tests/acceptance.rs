//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use berwald_cli::commands::{connection_for, killing_summary, random_loops};
use berwald_cli::RunConfig;
use berwald_core::averaging::{averaged_metric, pointwise_f_consistency, recover_f, AveragedMetric};
use berwald_core::classify::{classify, Classification, SamplePlan, Verdict};
use berwald_core::connection::{
    assemble_compatible, compatibility_residual, parallel_transport, torsion_decompose, torsion_of, TorsionScalar,
    TorsionTensor,
};
use berwald_core::curvature::{comparison_curvature, curvature, jacobi_defect_with};
use berwald_core::field::{AnalyticMetric, ChartBox, MetricField, ScalarField, VectorField};
use berwald_core::kernel::{spd_check, DiffScheme, SymMat3, Vec3};
use berwald_core::metrics::{finsler_norm, verify_axioms, AxiomSamplePlan, FinslerMetric, Riemannian};
use berwald_core::quadrature::SphericalQuadratureRule;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

const SU2: &str = r#"
[manifold]
domain = { min = [-0.4, -0.4, -0.4], max = [0.4, 0.4, 0.4] }
metric = { kind = "su2", radius = 1.0, base = { kind = "quartic", epsilon = 0.1 } }
killing = { kind = "hopf", axis = 2 }

[transport]
loops = 1
loop_radius = 0.1
"#;

const MINKOWSKI: &str = r#"
[manifold]
domain = { min = [-0.5, -0.5, -0.5], max = [0.5, 0.5, 0.5] }
metric = { kind = "quartic", epsilon = 0.1 }
"#;

const GRADIENT: &str = r#"
[manifold]
domain = { min = [-0.4, -0.4, -0.4], max = [0.4, 0.4, 0.4] }
metric = { kind = "quartic", epsilon = 0.3, gradient = [2.0, 0.0, 0.0] }

[sample]
lattice = [3, 1, 1]
"#;

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("{e:#}")
}

fn config(text: &str) -> Result<RunConfig, String> {
    let c = RunConfig::from_toml(text).map_err(err)?;
    c.validate().map_err(err)?;
    Ok(c)
}

fn sym(m: Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn random_matrix(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    sym(Matrix3::from_fn(|_, _| rng.gen_range(-scale..scale)))
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

/// `gamma(p) = A + sum_m p^m B_m + C sin(k . p)`, redrawn until SPD with margin on the box.
fn random_metric(rng: &mut ChaCha8Rng, domain: ChartBox) -> Arc<dyn MetricField> {
    loop {
        let a = Matrix3::identity() + random_matrix(rng, 0.15);
        let b = [random_matrix(rng, 0.3), random_matrix(rng, 0.3), random_matrix(rng, 0.3)];
        let c = random_matrix(rng, 0.15);
        let k = random_vec(rng, 2.0);
        let eval = move |p: &Vec3| {
            SymMat3::from_matrix(a + b[0] * p.x + b[1] * p.y + b[2] * p.z + c * k.dot(p).sin())
        };
        let mut probes: Vec<Vec3> = domain.corners().collect();
        probes.push(domain.center());
        if probes.iter().all(|p| spd_check(&eval(p)).min_eigenvalue > 0.3) {
            return Arc::new(AnalyticMetric::new(domain, eval));
        }
    }
}

/// `f(p) = f0 + g . p + s sin(q . p)`.
fn random_scalar(rng: &mut ChaCha8Rng) -> Arc<dyn ScalarField> {
    let f0 = rng.gen_range(-1.0..1.0);
    let g = random_vec(rng, 1.0);
    let s = rng.gen_range(-0.5..0.5);
    let q = random_vec(rng, 2.0);
    Arc::new(move |p: &Vec3| f0 + g.dot(p) + s * q.dot(p).sin())
}

fn riemannian_detection() -> Outcome {
    let start = Instant::now();
    let domain = ChartBox::cube(0.5);
    let input = move |p: &Vec3| {
        SymMat3::from_rows([
            [2.0 + 0.5 * p.x, 0.3 * p.y, 0.1],
            [0.3 * p.y, 1.5 + 0.4 * (2.0 * p.z).sin(), 0.2 * p.x],
            [0.1, 0.2 * p.x, 1.0 + 0.3 * p.y * p.y],
        ])
    };
    let field: Arc<dyn MetricField> = Arc::new(AnalyticMetric::new(domain, input));
    let averaged = AveragedMetric::new(
        Arc::new(Riemannian { field }),
        SphericalQuadratureRule::new(32, 64).map_err(err)?,
        DiffScheme::default(),
    );
    let points = SamplePlan::default().points(&domain).map_err(err)?;
    let (mut max_sigma, mut max_area, mut max_ratio) = (0.0_f64, 0.0_f64, 0.0_f64);
    for p in &points {
        let r = recover_f(&averaged, p).map_err(err)?;
        let a = input(p);
        let gamma = averaged.metric_at(p).map_err(err)?;
        max_sigma = max_sigma.max(r.sigma_relative);
        max_area = max_area.max((r.area - 4.0 * PI).abs());
        max_ratio = max_ratio.max((gamma - a.scaled(r.area)).max_abs() / (r.area * a.max_abs()));
        if !r.degenerate || r.f.is_some() {
            return Ok((false, format!("point {:?} not flagged degenerate", p.as_slice())));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = points.len() == 27 && max_sigma < 1e-8 && max_area <= 1e-6 && max_ratio <= 1e-6 && secs < 60.0;
    Ok((
        pass,
        format!(
            "27 points, max sigma_rel {max_sigma:.1e}, |area - 4pi| {max_area:.1e}, |gamma - area a|/|gamma| {max_ratio:.1e}, {secs:.1}s"
        ),
    ))
}

fn minkowski_zero_case() -> Outcome {
    let c = config(MINKOWSKI)?;
    let averaged = c.averaged().map_err(err)?;
    let points = c.sample.points(&c.manifold.domain).map_err(err)?;
    let result = classify(&averaged, &points, &c.tolerances, None).map_err(err)?;
    let max_f = result.points.iter().map(|p| p.recovery.recovery.f_or_zero().abs()).fold(0.0, f64::max);
    let (connection, _) = connection_for(&c, &averaged).map_err(err)?;
    let probes = SphericalQuadratureRule::new(4, 8).map_err(err)?;
    let finsler = averaged.finsler().clone();
    let mut max_residual = 0.0_f64;
    for p in &points {
        for v in probes.directions() {
            let r = compatibility_residual(finsler.as_ref(), &connection, p, v, &c.differentiation).map_err(err)?;
            max_residual = max_residual.max(r.amax());
        }
    }
    let pass = points.len() == 27
        && max_f <= 1e-6
        && max_residual <= 1e-6
        && result.verdict == Verdict::ClassicalBerwaldZeroCurvature;
    Ok((
        pass,
        format!("max |f| {max_f:.1e}, max residual {max_residual:.1e}, verdict {}", result.verdict),
    ))
}

struct Su2Run {
    classification: Classification,
    drift: f64,
    halving_change: f64,
    seconds: f64,
}

fn su2_run() -> Result<Su2Run, String> {
    let start = Instant::now();
    let c = config(SU2)?;
    let averaged = c.averaged().map_err(err)?;
    let points = c.sample.points(&c.manifold.domain).map_err(err)?;
    let beta = c.manifold.killing.clone().ok_or("no killing field")?;
    let classification =
        classify(&averaged, &points, &c.tolerances, Some(&beta as &dyn VectorField)).map_err(err)?;
    let (connection, _) = connection_for(&c, &averaged).map_err(err)?;
    let finsler = averaged.finsler().clone();
    let (circle, v0) = random_loops(&c).map_err(err)?.remove(0);
    let transport = parallel_transport(&connection, &circle, &v0, c.transport.steps).map_err(err)?;
    let f0 = finsler_norm(finsler.as_ref(), &transport.trajectory[0].1, &v0).map_err(err)?;
    let mut drift = 0.0_f64;
    for (_, p, x) in &transport.trajectory {
        drift = drift.max((finsler_norm(finsler.as_ref(), p, x).map_err(err)? - f0).abs());
    }
    Ok(Su2Run { classification, drift, halving_change: transport.halving_change, seconds: start.elapsed().as_secs_f64() })
}

fn su2_positive_case(run: &Su2Run) -> Outcome {
    let s = &run.classification.summary;
    let spread = s.f_spread_relative.unwrap_or(f64::INFINITY);
    let curvature = s.max_curvature.unwrap_or(f64::INFINITY);
    let mismatch = s.max_sectional_mismatch.unwrap_or(f64::INFINITY);
    let n = run.classification.points.len() - s.degenerate_points;
    let pass = n >= 9
        && spread <= 1e-3
        && curvature <= 1e-3
        && run.drift <= 1e-5
        && mismatch <= 1e-3
        && run.classification.verdict == Verdict::ProperGbConstantPositiveCurvature
        && run.seconds < 600.0;
    Ok((
        pass,
        format!(
            "{n} points, f {:.9}, spread {spread:.1e}, |R| {curvature:.1e}, loop drift {:.1e}, |K* - f^2/4|/(f^2/4) {mismatch:.1e}, verdict {}, {:.0}s",
            s.f_mean.unwrap_or(f64::NAN),
            run.drift,
            run.classification.verdict,
            run.seconds
        ),
    ))
}

fn comparison_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let domain = ChartBox::cube(0.3);
    let scheme = DiffScheme::default();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let metric = random_metric(&mut rng, domain);
        let f = random_scalar(&mut rng);
        let connection = assemble_compatible(metric, TorsionScalar::Field(f), scheme);
        let p = random_vec(&mut rng, 0.15);
        let fd = curvature(&connection, &p, &scheme).map_err(err)?;
        let formula = comparison_curvature(&connection, &p).map_err(err)?;
        worst = worst.max(fd.distance(&formula));
    }
    Ok((worst <= 1e-4, format!("100 instances, max |R_fd - R_formula| {worst:.1e}")))
}

fn jacobi_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let domain = ChartBox::cube(0.3);
    let scheme = DiffScheme::default();
    let (mut constant, mut linear) = (0.0_f64, 0.0_f64);
    for instance in 0..20 {
        let metric = random_metric(&mut rng, domain);
        let scalar = if instance % 2 == 0 {
            TorsionScalar::Constant(rng.gen_range(-1.0..1.0))
        } else {
            TorsionScalar::Field(Arc::new(|p: &Vec3| p.x))
        };
        let connection = assemble_compatible(metric, scalar, scheme);
        let p = random_vec(&mut rng, 0.15);
        let r = curvature(&connection, &p, &scheme).map_err(err)?;
        for _ in 0..10 {
            let (x, y, z) = (random_vec(&mut rng, 1.0), random_vec(&mut rng, 1.0), random_vec(&mut rng, 1.0));
            let j = jacobi_defect_with(&connection, &r, &p, &x, &y, &z).map_err(err)?;
            if instance % 2 == 0 {
                constant = constant.max(j.cyclic_sum.amax());
            } else {
                linear = linear.max(j.defect);
            }
        }
    }
    Ok((
        constant <= 1e-6 && linear <= 1e-6,
        format!("100 triples each: constant f cyclic sum {constant:.1e}, f = x^1 defect {linear:.1e}"),
    ))
}

fn killing_case(run: &Su2Run) -> Outcome {
    let beta = config(SU2)?.manifold.killing.ok_or("no killing field")?;
    let k = killing_summary(&beta, &run.classification);
    let mut worst_f = 0.0_f64;
    for p in &run.classification.points {
        let extraction = p.killing.as_ref().and_then(|d| d.extraction).ok_or("killing extraction rejected")?;
        let f = p.recovery.recovery.f.ok_or("degenerate point")?;
        worst_f = worst_f.max((extraction.f - f).abs() / f.abs());
    }
    let pass = k.max_lie_derivative <= 1e-4 && k.max_covariant_residual <= 1e-4 && k.rejected_points == 0 && worst_f <= 1e-3;
    Ok((
        pass,
        format!(
            "L_beta gamma {:.1e}, nabla beta residual {:.1e}, max |f_killing - f|/|f| {worst_f:.1e}",
            k.max_lie_derivative, k.max_covariant_residual
        ),
    ))
}

fn torsion_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let domain = ChartBox::cube(0.3);
    let scheme = DiffScheme::default();
    let (mut cross, mut semi, mut recompose) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..50 {
        let metric = random_metric(&mut rng, domain);
        let p = random_vec(&mut rng, 0.15);
        let gamma = metric.metric_at(&p).map_err(err)?;
        let f = rng.gen_range(-2.0..2.0);
        let connection = assemble_compatible(metric, TorsionScalar::Constant(f), scheme);
        let t = torsion_of(&connection, &p).map_err(err)?;
        let parts = torsion_decompose(&t, &gamma).map_err(err)?;
        let scale = t.max_abs();
        cross = cross
            .max(parts.axial.distance(&t) / scale)
            .max(parts.traceless.max_abs() / scale)
            .max(parts.trace.max_abs() / scale);

        // T(X, Y) = w(X) Y - w(Y) X
        let w = random_vec(&mut rng, 1.0);
        let mut s = TorsionTensor::zero();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    s.0[k][i][j] = w[i] * f64::from(u8::from(k == j)) - w[j] * f64::from(u8::from(k == i));
                }
            }
        }
        let parts = torsion_decompose(&s, &gamma).map_err(err)?;
        semi = semi
            .max(parts.axial.max_abs())
            .max(parts.traceless.max_abs())
            .max(parts.trace.distance(&s));

        let mut generic = TorsionTensor::zero();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..i {
                    let v = rng.gen_range(-1.0..1.0);
                    generic.0[k][i][j] = v;
                    generic.0[k][j][i] = -v;
                }
            }
        }
        let parts = torsion_decompose(&generic, &gamma).map_err(err)?;
        recompose = recompose.max(parts.recompose().distance(&generic));
    }
    Ok((
        cross <= 1e-12 && semi <= 1e-12 && recompose <= 1e-12,
        format!("cross-product {cross:.1e}, semi-symmetric {semi:.1e}, recomposition {recompose:.1e}"),
    ))
}

fn berwald(args: &[&str]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_berwald")).args(args).output().map_err(err)?;
    out.status.code().ok_or_else(|| "killed by signal".to_string())
}

fn negative_control(dir: &Path) -> Outcome {
    let c = config(GRADIENT)?;
    let averaged = c.averaged().map_err(err)?;
    let mut max_consistency = 0.0_f64;
    for p in c.sample.points(&c.manifold.domain).map_err(err)? {
        max_consistency = max_consistency.max(pointwise_f_consistency(&averaged, &p).map_err(err)?.1);
    }
    let path = dir.join("gradient.toml");
    fs::write(&path, GRADIENT).map_err(err)?;
    let out = dir.join("gradient");
    let code = berwald(&["classify", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("classify.json")).map_err(err)?).map_err(err)?;
    let pass = max_consistency > 1e-2 && code == 2 && report["verdict"] == "inconsistent";
    Ok((pass, format!("consistency {max_consistency:.2e}, verdict {}, exit code {code}", report["verdict"])))
}

fn hygiene(dir: &Path, run: &Su2Run) -> Outcome {
    let scheme = DiffScheme::default();
    let su2 = config(SU2)?.metric().map_err(err)?;
    let trifocal = config(
        "[manifold]\ndomain = { min = [-0.5, -0.5, -0.5], max = [0.5, 0.5, 0.5] }\nmetric = { kind = \"trifocal\", beta = [0.1, 0.0, 0.4], beta_gradient = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.2, 0.0, 0.0]], c = 3.0 }\n",
    )?
    .metric()
    .map_err(err)?;
    let quartic = config(MINKOWSKI)?.metric().map_err(err)?;
    let zoo: [(&str, Arc<dyn FinslerMetric>); 3] = [("quartic", quartic), ("trifocal", trifocal), ("su2", su2)];

    let coarse = SphericalQuadratureRule::new(32, 64).map_err(err)?;
    let fine = coarse.refined().map_err(err)?;
    let p = Vec3::new(0.1, -0.2, 0.15);
    let mut refinement = 0.0_f64;
    let mut homogeneity = 0.0_f64;
    let mut euler = 0.0_f64;
    for (_, metric) in &zoo {
        let a = averaged_metric(metric.as_ref(), &p, &coarse, &scheme).map_err(err)?;
        let b = averaged_metric(metric.as_ref(), &p, &fine, &scheme).map_err(err)?;
        refinement = refinement.max((a - b).max_abs() / b.max_abs());
        let axioms = verify_axioms(metric.as_ref(), &AxiomSamplePlan::default(), &scheme);
        homogeneity = homogeneity.max(axioms.max_homogeneity_residual);
        euler = euler.max(axioms.max_euler_residual).max(axioms.max_energy_euler_residual);
    }

    let path = dir.join("minkowski.toml");
    fs::write(&path, MINKOWSKI).map_err(err)?;
    let out = dir.join("minkowski");
    let args = ["analyze", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--n-theta", "16", "--n-phi", "32"];
    let mut reports = Vec::new();
    for _ in 0..2 {
        berwald(&args)?;
        reports.push((fs::read(out.join("analyze.json")).map_err(err)?, fs::read(out.join("analyze.csv")).map_err(err)?));
    }
    let identical = reports[0] == reports[1];
    let pass = refinement < 1e-6 && homogeneity <= 1e-8 && euler <= 1e-8 && run.halving_change <= 1e-8 && identical;
    Ok((
        pass,
        format!(
            "refinement {refinement:.1e}, homogeneity {homogeneity:.1e}, euler {euler:.1e}, transport halving {:.1e}, reports identical: {identical}",
            run.halving_change
        ),
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failures += 1;
        }
        println!("criterion {n} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    report(1, "riemannian detection", riemannian_detection());
    report(2, "locally minkowski, zero torsion", minkowski_zero_case());
    let su2 = su2_run();
    match &su2 {
        Ok(run) => report(3, "su2, constant positive curvature", su2_positive_case(run)),
        Err(e) => report(3, "su2, constant positive curvature", Err(e.clone())),
    }
    report(4, "curvature comparison formula", comparison_formula());
    report(5, "jacobi cyclic sum", jacobi_identity());
    match &su2 {
        Ok(run) => report(6, "hopf killing field", killing_case(run)),
        Err(e) => report(6, "hopf killing field", Err(e.clone())),
    }
    report(7, "torsion decomposition", torsion_decomposition());
    report(8, "negative control", negative_control(dir.path()));
    match &su2 {
        Ok(run) => report(9, "numerics hygiene", hygiene(dir.path(), run)),
        Err(e) => report(9, "numerics hygiene", Err(e.clone())),
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

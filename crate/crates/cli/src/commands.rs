//! The five workflows behind the subcommands.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use berwald_core::averaging::AveragedMetric;
use berwald_core::classify::{
    assemble_from_model, classify, recover_on_points, torsion_model, Classification, TorsionModel, Verdict,
};
use berwald_core::connection::{
    assemble_compatible, compatibility_residual, parallel_transport, CircleLoop, CompatibleConnection, Curve,
    Segment, TorsionScalar,
};
use berwald_core::field::{MetricField, VectorField};
use berwald_core::kernel::Vec3;
use berwald_core::killing::VectorFieldSpec;
use berwald_core::metrics::{finsler_norm, FinslerMetric};
use berwald_core::quadrature::SphericalQuadratureRule;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{CurveSpec, RunConfig};
use crate::mesh::{indicatrix_mesh, MeshSummary};
use crate::report::{output_dir, write_json, write_points_csv, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONSISTENT: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    VerifyConnection,
    Classify,
    ExportIndicatrix,
    Transport,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::VerifyConnection => "verify-connection",
            Command::Classify => "classify",
            Command::ExportIndicatrix => "export-indicatrix",
            Command::Transport => "transport",
        }
    }
}

/// Exit code, written files and a one-line summary for the terminal.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub headline: String,
}

pub fn run(command: Command, config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    match command {
        Command::Analyze => run_classification(command, config, None),
        Command::Classify => run_classification(command, config, config.manifold.killing.as_ref()),
        Command::VerifyConnection => verify_connection(config),
        Command::ExportIndicatrix => export_indicatrix(config),
        Command::Transport => transport(config),
    }
}

fn envelope<'a, B: Serialize>(command: Command, config: &'a RunConfig, metric: String, exit_code: i32, body: B) -> Report<'a, B> {
    Report {
        schema_version: crate::report::SCHEMA_VERSION,
        tool: crate::report::ToolInfo::current(),
        command: command.name(),
        metric,
        exit_code,
        config,
        body,
    }
}

/// Killing evidence aggregated over the sample points.
#[derive(Clone, Debug, Serialize)]
pub struct KillingSummary {
    pub field: VectorFieldSpec,
    pub max_lie_derivative: f64,
    pub max_covariant_residual: f64,
    pub max_constant_length: f64,
    pub rejected_points: usize,
    pub f_killing_mean: Option<f64>,
    /// `|f_killing_mean - f_mean| / |f_mean|`.
    pub relative_to_recovered: Option<f64>,
}

pub fn killing_summary(field: &VectorFieldSpec, c: &Classification) -> KillingSummary {
    let diags: Vec<_> = c.points.iter().filter_map(|p| p.killing.as_ref()).collect();
    let max = |g: &dyn Fn(&berwald_core::classify::KillingDiagnostics) -> f64| diags.iter().map(|d| g(d)).fold(0.0, f64::max);
    let extracted: Vec<f64> = diags.iter().filter_map(|d| d.extraction.map(|e| e.f)).collect();
    let f_killing_mean = (!extracted.is_empty()).then(|| extracted.iter().sum::<f64>() / extracted.len() as f64);
    let relative_to_recovered = match (f_killing_mean, c.summary.f_mean) {
        (Some(k), Some(f)) if f != 0.0 => Some((k - f).abs() / f.abs()),
        _ => None,
    };
    KillingSummary {
        field: field.clone(),
        max_lie_derivative: max(&|d| d.lie_derivative),
        max_covariant_residual: max(&|d| d.covariant_residual),
        max_constant_length: max(&|d| d.constant_length),
        rejected_points: diags.iter().filter(|d| d.rejection.is_some()).count(),
        f_killing_mean,
        relative_to_recovered,
    }
}

#[derive(Serialize)]
struct ClassificationBody<'a> {
    #[serde(flatten)]
    classification: &'a Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    killing_summary: Option<KillingSummary>,
}

fn run_classification(command: Command, config: &RunConfig, killing: Option<&VectorFieldSpec>) -> Result<Outcome> {
    let averaged = config.averaged()?;
    let points = config.sample.points(&config.manifold.domain)?;
    info!("{}: {} sample points, {} quadrature nodes", command.name(), points.len(), averaged.rule().len());
    let beta = killing.map(|k| k as &dyn VectorField);
    let c = classify(&averaged, &points, &config.tolerances, beta)?;
    let exit_code = if c.verdict == Verdict::Inconsistent { EXIT_INCONSISTENT } else { EXIT_OK };
    let body = ClassificationBody { classification: &c, killing_summary: killing.map(|k| killing_summary(k, &c)) };
    let dir = output_dir(config)?;
    let json = dir.join(format!("{}.json", command.name()));
    let csv = dir.join(format!("{}.csv", command.name()));
    write_json(&json, &envelope(command, config, averaged.finsler().name(), exit_code, body))?;
    write_points_csv(&csv, &c.points)?;
    Ok(Outcome { exit_code, files: vec![json, csv], headline: format!("verdict: {}", c.verdict) })
}

/// Where the torsion scalar of the tested connection came from.
#[derive(Clone, Debug, Serialize)]
pub struct TorsionSource {
    /// `override` or `recovered`.
    pub source: &'static str,
    pub model: TorsionModel,
}

/// The connection to test: `f` from the config, or the model fitted to the recovered values.
pub fn connection_for(config: &RunConfig, averaged: &Arc<AveragedMetric>) -> Result<(CompatibleConnection, TorsionSource)> {
    if let Some(f) = config.connection.f {
        let metric: Arc<dyn MetricField> = averaged.clone();
        let model = if f == 0.0 { TorsionModel::Zero } else { TorsionModel::Constant { value: f } };
        return Ok((
            assemble_compatible(metric, TorsionScalar::Constant(f), *averaged.scheme()),
            TorsionSource { source: "override", model },
        ));
    }
    let points = config.sample.points(&config.manifold.domain)?;
    let records = recover_on_points(averaged, &points, &config.tolerances)?;
    let model = torsion_model(&records, &config.tolerances);
    Ok((assemble_from_model(averaged, model, &config.tolerances), TorsionSource { source: "recovered", model }))
}

#[derive(Clone, Debug, Serialize)]
pub struct PointResidual {
    pub point: [f64; 3],
    /// `max |X_i^h F|` over the probe directions.
    pub max_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopRecord {
    pub center: [f64; 3],
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
    pub v0: [f64; 3],
    pub length: f64,
    pub initial_norm: f64,
    pub max_drift: f64,
    pub drift_per_length: f64,
    pub steps: usize,
    pub halving_change: f64,
    pub closing_error: f64,
}

#[derive(Serialize)]
struct VerifyBody {
    torsion: TorsionSource,
    probe_directions: usize,
    max_residual: f64,
    residual_tolerance: f64,
    residuals: Vec<PointResidual>,
    loops: Vec<LoopRecord>,
    max_drift_per_length: f64,
    drift_tolerance: f64,
    passed: bool,
    evidence: Vec<String>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Seeded circles of the configured radius that keep the stencils inside the chart.
pub fn random_loops(config: &RunConfig) -> Result<Vec<(CircleLoop, Vec3)>> {
    let t = &config.transport;
    let domain = &config.manifold.domain;
    // christoffel symbols differentiate gamma once around each curve point
    let margin = t.loop_radius + config.differentiation.base_reach();
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let mut loops = Vec::with_capacity(t.loops);
    for _ in 0..t.loops {
        let center = Vec3::from_fn(|i, _| {
            let (lo, hi) = (domain.min[i] + margin, domain.max[i] - margin);
            if lo < hi {
                rng.gen_range(lo..hi)
            } else {
                f64::NAN
            }
        });
        if center.iter().any(|x| x.is_nan()) {
            bail!("transport.loop_radius {} does not fit inside the domain", t.loop_radius);
        }
        let a = random_unit(&mut rng);
        let b = loop {
            let w = random_unit(&mut rng);
            let w = w - a * a.dot(&w);
            if w.norm() > 0.1 {
                break w.normalize();
            }
        };
        let v0 = random_unit(&mut rng);
        loops.push((CircleLoop { center, a, b, radius: t.loop_radius }, v0));
    }
    Ok(loops)
}

fn curve_length(curve: &dyn Curve) -> f64 {
    // Simpson on |c'|; exact for segments and circles
    let n = 64;
    let h = 1.0 / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * curve.velocity(i as f64 * h).norm()
        })
        .sum::<f64>()
        * h
        / 3.0
}

fn transport_record(
    metric: &dyn FinslerMetric,
    connection: &CompatibleConnection,
    curve: &dyn Curve,
    v0: &Vec3,
    steps: usize,
) -> Result<(berwald_core::connection::TransportResult, f64, f64, f64)> {
    let transport = parallel_transport(connection, curve, v0, steps)?;
    let initial = finsler_norm(metric, &curve.position(0.0), v0)?;
    let mut max_drift = 0.0_f64;
    for (_, c, x) in &transport.trajectory {
        max_drift = max_drift.max((finsler_norm(metric, c, x)? - initial).abs());
    }
    let length = curve_length(curve);
    Ok((transport, initial, max_drift, length))
}

fn verify_connection(config: &RunConfig) -> Result<Outcome> {
    let command = Command::VerifyConnection;
    let averaged = config.averaged()?;
    let metric = averaged.finsler().clone();
    let (connection, torsion) = connection_for(config, &averaged)?;
    info!("verify-connection: torsion {:?} ({})", torsion.model, torsion.source);
    let scheme = config.differentiation;
    let probes = SphericalQuadratureRule::new(4, 8)?;
    let mut residuals = Vec::new();
    for p in config.sample.points(&config.manifold.domain)? {
        let mut worst = 0.0_f64;
        for v in probes.directions() {
            worst = worst.max(compatibility_residual(metric.as_ref(), &connection, &p, v, &scheme)?.amax());
        }
        residuals.push(PointResidual { point: arr(&p), max_residual: worst });
    }
    let max_residual = residuals.iter().map(|r| r.max_residual).fold(0.0, f64::max);

    let mut loops = Vec::new();
    for (i, (circle, v0)) in random_loops(config)?.into_iter().enumerate() {
        let (result, initial_norm, max_drift, length) =
            transport_record(metric.as_ref(), &connection, &circle, &v0, config.transport.steps)?;
        info!("loop {i}: drift {max_drift:.3e} over {} steps", result.steps);
        loops.push(LoopRecord {
            center: arr(&circle.center),
            a: arr(&circle.a),
            b: arr(&circle.b),
            radius: circle.radius,
            v0: arr(&v0),
            length,
            initial_norm,
            max_drift,
            drift_per_length: max_drift / length,
            steps: result.steps,
            halving_change: result.halving_change,
            closing_error: (result.endpoint - v0).amax(),
        });
    }
    let max_drift_per_length = loops.iter().map(|l| l.drift_per_length).fold(0.0, f64::max);
    let residual_tolerance = config.tolerances.compatibility;
    let drift_tolerance = config.transport.drift_tolerance;
    let mut evidence = vec![format!(
        "max compatibility residual {max_residual:.3e} (tolerance {residual_tolerance:.1e}) over {} points",
        residuals.len()
    )];
    evidence.push(format!(
        "max length drift {max_drift_per_length:.3e} per unit length (tolerance {drift_tolerance:.1e}) over {} loops",
        loops.len()
    ));
    let passed = max_residual <= residual_tolerance && max_drift_per_length <= drift_tolerance;
    let exit_code = if passed { EXIT_OK } else { EXIT_INCONSISTENT };
    let body = VerifyBody {
        torsion,
        probe_directions: probes.len(),
        max_residual,
        residual_tolerance,
        residuals,
        loops,
        max_drift_per_length,
        drift_tolerance,
        passed,
        evidence,
    };
    let dir = output_dir(config)?;
    let json = dir.join("verify-connection.json");
    write_json(&json, &envelope(command, config, metric.name(), exit_code, body))?;
    let headline = format!(
        "{}: residual {max_residual:.3e}, drift per length {max_drift_per_length:.3e}",
        if passed { "compatible" } else { "not compatible" }
    );
    Ok(Outcome { exit_code, files: vec![json], headline })
}

#[derive(Serialize)]
struct ExportBody<'a> {
    mesh_file: &'a str,
    #[serde(flatten)]
    summary: MeshSummary,
}

fn export_indicatrix(config: &RunConfig) -> Result<Outcome> {
    let command = Command::ExportIndicatrix;
    let metric = config.metric()?;
    let rule = SphericalQuadratureRule::from_spec(&config.quadrature)?;
    let p = config.output.export_point.map(Vec3::from).unwrap_or_else(|| config.manifold.domain.center());
    let mesh = indicatrix_mesh(metric.as_ref(), &p, &rule)?;
    let dir = output_dir(config)?;
    let obj = dir.join("indicatrix.obj");
    let header = format!("indicatrix of {} at {:?}", metric.name(), arr(&p));
    fs::write(&obj, mesh.to_obj(&header)).with_context(|| format!("cannot write {}", obj.display()))?;
    let summary = mesh.summary();
    let headline = format!(
        "{} vertices, radius {:.6} to {:.6}",
        summary.vertices, summary.min_radius, summary.max_radius
    );
    let json = dir.join("indicatrix.json");
    let body = ExportBody { mesh_file: "indicatrix.obj", summary };
    write_json(&json, &envelope(command, config, metric.name(), EXIT_OK, body))?;
    Ok(Outcome { exit_code: EXIT_OK, files: vec![obj, json], headline })
}

#[derive(Serialize)]
struct TrajectoryPoint {
    t: f64,
    position: [f64; 3],
    vector: [f64; 3],
    finsler_norm: f64,
}

#[derive(Serialize)]
struct TransportBody {
    curve: CurveSpec,
    v0: [f64; 3],
    torsion: TorsionSource,
    length: f64,
    steps: usize,
    halving_change: f64,
    endpoint: [f64; 3],
    initial_norm: f64,
    max_drift: f64,
    drift_per_length: f64,
    drift_tolerance: f64,
    passed: bool,
    trajectory: Vec<TrajectoryPoint>,
}

pub fn configured_curve(config: &RunConfig) -> CurveSpec {
    config.transport.curve.clone().unwrap_or_else(|| CurveSpec::Circle {
        center: arr(&config.manifold.domain.center()),
        a: [1.0, 0.0, 0.0],
        b: [0.0, 1.0, 0.0],
        radius: config.transport.loop_radius,
    })
}

fn build_curve(spec: &CurveSpec) -> Box<dyn Curve> {
    match spec {
        CurveSpec::Segment { start, displacement } => {
            Box::new(Segment { start: Vec3::from(*start), displacement: Vec3::from(*displacement) })
        }
        CurveSpec::Circle { center, a, b, radius } => Box::new(CircleLoop {
            center: Vec3::from(*center),
            a: Vec3::from(*a),
            b: Vec3::from(*b),
            radius: *radius,
        }),
    }
}

fn transport(config: &RunConfig) -> Result<Outcome> {
    let command = Command::Transport;
    let averaged = config.averaged()?;
    let metric = averaged.finsler().clone();
    let (connection, torsion) = connection_for(config, &averaged)?;
    let spec = configured_curve(config);
    let curve = build_curve(&spec);
    let v0 = Vec3::from(config.transport.v0);
    let (result, initial_norm, max_drift, length) =
        transport_record(metric.as_ref(), &connection, curve.as_ref(), &v0, config.transport.steps)?;
    let trajectory = result
        .trajectory
        .iter()
        .map(|(t, c, x)| {
            Ok(TrajectoryPoint { t: *t, position: arr(c), vector: arr(x), finsler_norm: finsler_norm(metric.as_ref(), c, x)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let drift_per_length = if length > 0.0 { max_drift / length } else { max_drift };
    let drift_tolerance = config.transport.drift_tolerance;
    let passed = drift_per_length <= drift_tolerance;
    let exit_code = if passed { EXIT_OK } else { EXIT_INCONSISTENT };
    let body = TransportBody {
        curve: spec,
        v0: config.transport.v0,
        torsion,
        length,
        steps: result.steps,
        halving_change: result.halving_change,
        endpoint: arr(&result.endpoint),
        initial_norm,
        max_drift,
        drift_per_length,
        drift_tolerance,
        passed,
        trajectory,
    };
    let dir = output_dir(config)?;
    let json = dir.join("transport.json");
    write_json(&json, &envelope(command, config, metric.name(), exit_code, body))?;
    let headline = format!("{} steps, length drift {max_drift:.3e}", result.steps);
    Ok(Outcome { exit_code, files: vec![json], headline })
}

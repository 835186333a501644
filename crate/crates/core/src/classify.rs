//! Sample plans and the verdict logic over recovered torsion, curvature and Killing checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::averaging::{AveragedMetric, FRecoveryResult, FiberAnalysis, RecoveredTorsion};
use crate::connection::{assemble_compatible, CompatibleConnection, TorsionScalar};
use crate::curvature::{curvature_with_scale, torsion_curvature_terms, SectionalComparison};
use crate::error::{GeometryError, Result};
use crate::field::{ChartBox, MetricField, VectorField};
use crate::kernel::{basis, Vec3};
use crate::killing::{
    constant_length_residual, covariant_constancy_residual, extract_f_from_killing, lie_derivative_metric,
    KillingExtraction, KillingTolerances,
};

/// Cell-centred lattice plus a seeded pseudo-random batch, inside the domain
/// shrunk by `margin` (a fraction of each axis) on every side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePlan {
    pub lattice: [usize; 3],
    pub random: usize,
    pub seed: u64,
    pub margin: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            lattice: [3, 3, 3],
            random: 0,
            seed: 20_240_917,
            margin: 0.15,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.margin) {
            return Err(GeometryError::InvalidInput(format!(
                "sample margin must lie in [0, 0.5), got {}",
                self.margin
            )));
        }
        if self.len() == 0 {
            return Err(GeometryError::InvalidInput("sample plan has no points".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lattice.iter().product::<usize>() + self.random
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self, domain: &ChartBox) -> Result<Vec<Vec3>> {
        self.validate()?;
        let inner = ChartBox::new(
            std::array::from_fn(|i| domain.min[i] + self.margin * (domain.max[i] - domain.min[i])),
            std::array::from_fn(|i| domain.max[i] - self.margin * (domain.max[i] - domain.min[i])),
        )?;
        let [nx, ny, nz] = self.lattice;
        let mut points = Vec::with_capacity(self.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let t = [
                        (i as f64 + 0.5) / nx as f64,
                        (j as f64 + 0.5) / ny as f64,
                        (k as f64 + 0.5) / nz as f64,
                    ];
                    points.push(inner.lerp(t));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random {
            let t: [f64; 3] = std::array::from_fn(|_| rng.gen::<f64>());
            points.push(inner.lerp(t));
        }
        Ok(points)
    }
}

/// Thresholds of the classification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative `sigma` below which an indicatrix counts as a `gamma`-sphere.
    pub riemannian: f64,
    /// `|f|` below which the torsion counts as zero.
    pub f_zero: f64,
    /// Relative spread of `f` below which it counts as constant.
    pub f_spread: f64,
    /// Max `|X_i^h* E - f V_i E|` for a compatible input.
    pub consistency: f64,
    /// Max `|X_i^h F|` over sampled directions for a connection to count as compatible.
    pub compatibility: f64,
    /// Max `|R|` relative to the symbol scale for a flat connection.
    pub flatness: f64,
    /// Relative mismatch between `K*` and `f^2 / 4`.
    pub sectional: f64,
    pub killing: KillingTolerances,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            riemannian: 1e-8,
            f_zero: 1e-6,
            f_spread: 1e-3,
            consistency: 1e-3,
            compatibility: 1e-5,
            flatness: 1e-3,
            sectional: 1e-3,
            killing: KillingTolerances::default(),
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("riemannian", self.riemannian),
            ("f_zero", self.f_zero),
            ("f_spread", self.f_spread),
            ("consistency", self.consistency),
            ("compatibility", self.compatibility),
            ("flatness", self.flatness),
            ("sectional", self.sectional),
            ("killing.lie_derivative", self.killing.lie_derivative),
            ("killing.constant_length", self.killing.constant_length),
            ("killing.hesse_antisymmetry", self.killing.hesse_antisymmetry),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::InvalidInput(format!(
                    "tolerance {name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    RiemannianDegenerate,
    ClassicalBerwaldZeroCurvature,
    ProperGbConstantPositiveCurvature,
    NonFlatWithKillingCandidate,
    Inconsistent,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::RiemannianDegenerate => "riemannian_degenerate",
            Verdict::ClassicalBerwaldZeroCurvature => "classical_berwald_zero_curvature",
            Verdict::ProperGbConstantPositiveCurvature => "proper_gb_constant_positive_curvature",
            Verdict::NonFlatWithKillingCandidate => "non_flat_with_killing_candidate",
            Verdict::Inconsistent => "inconsistent",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Torsion scalar and consistency at one sample point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecovery {
    pub point: [f64; 3],
    pub gamma: [[f64; 3]; 3],
    pub recovery: FRecoveryResult,
    pub consistency: f64,
}

/// Curvature evidence at one sample point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureDiagnostics {
    /// `max |R|` of the assembled connection.
    pub connection_norm: f64,
    /// `max |R*|` of the Levi-Civita connection.
    pub levi_civita_norm: f64,
    pub symbol_scale: f64,
    /// Max difference between the finite-difference curvature and the comparison formula.
    pub comparison_defect: f64,
    /// Coordinate planes `(e1, e2)`, `(e2, e3)`, `(e3, e1)`.
    pub sectional: [SectionalComparison; 3],
}

/// Killing checks of a candidate field at one sample point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KillingDiagnostics {
    pub lie_derivative: f64,
    pub covariant_residual: f64,
    pub constant_length: f64,
    pub extraction: Option<KillingExtraction>,
    pub rejection: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointDiagnostics {
    #[serde(flatten)]
    pub recovery: PointRecovery,
    pub curvature: Option<CurvatureDiagnostics>,
    pub killing: Option<KillingDiagnostics>,
}

/// How the assembled connection carries `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TorsionModel {
    Zero,
    Constant { value: f64 },
    Field,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationSummary {
    pub degenerate_points: usize,
    pub f_mean: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub f_spread_relative: Option<f64>,
    pub max_consistency: f64,
    pub torsion_model: Option<TorsionModel>,
    /// Max over points of `|R| / max(symbol_scale, 1 / diam^2)`, `diam` the chart diagonal.
    pub max_relative_curvature: Option<f64>,
    pub max_curvature: Option<f64>,
    /// Max over points and planes of `|K* - f^2/4| / (f^2/4)`.
    pub max_sectional_mismatch: Option<f64>,
    pub max_comparison_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub summary: ClassificationSummary,
    pub evidence: Vec<String>,
    pub points: Vec<PointDiagnostics>,
}

/// Recovers `f` and its pointwise consistency at every point.
pub fn recover_on_points(averaged: &AveragedMetric, points: &[Vec3], tolerances: &Tolerances) -> Result<Vec<PointRecovery>> {
    points
        .iter()
        .map(|p| {
            let analysis = FiberAnalysis::new(averaged, p)?;
            let mut recovery = analysis.recover(tolerances.riemannian);
            recovery.n_theta = averaged.rule().n_theta();
            recovery.n_phi = averaged.rule().n_phi();
            Ok(PointRecovery {
                point: [p.x, p.y, p.z],
                gamma: analysis.gamma.to_rows(),
                consistency: analysis.consistency(recovery.f_or_zero()),
                recovery,
            })
        })
        .collect()
}

/// Chooses how to carry `f` into the assembled connection.
pub fn torsion_model(records: &[PointRecovery], tolerances: &Tolerances) -> TorsionModel {
    let values: Vec<f64> = records.iter().map(|r| r.recovery.f_or_zero()).collect();
    if values.iter().all(|f| f.abs() <= tolerances.f_zero) {
        return TorsionModel::Zero;
    }
    let (lo, hi, mean) = stats(&values);
    if records.iter().all(|r| !r.recovery.degenerate) && (hi - lo) <= tolerances.f_spread * mean.abs() {
        TorsionModel::Constant { value: mean }
    } else {
        TorsionModel::Field
    }
}

fn stats(values: &[f64]) -> (f64, f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = crate::kernel::pairwise_sum(values) / values.len() as f64;
    (lo, hi, mean)
}

/// The cross-product connection built from the recovered torsion.
pub fn assemble_from_model(averaged: &Arc<AveragedMetric>, model: TorsionModel, tolerances: &Tolerances) -> CompatibleConnection {
    let scalar = match model {
        TorsionModel::Zero => TorsionScalar::Constant(0.0),
        TorsionModel::Constant { value } => TorsionScalar::Constant(value),
        TorsionModel::Field => {
            TorsionScalar::Field(Arc::new(RecoveredTorsion::new(averaged.clone(), tolerances.riemannian)))
        }
    };
    let metric: Arc<dyn MetricField> = averaged.clone();
    assemble_compatible(metric, scalar, *averaged.scheme())
}

fn curvature_diagnostics(connection: &CompatibleConnection, p: &Vec3) -> Result<CurvatureDiagnostics> {
    let scheme = *connection.scheme();
    let full = curvature_with_scale(connection, p, &scheme)?;
    let lc = curvature_with_scale(connection.levi_civita(), p, &scheme)?;
    let comparison = lc.operator + torsion_curvature_terms(connection, p)?;
    let gamma = connection.metric().metric_at(p)?;
    let f = connection.torsion_scalar().value(p)?;
    let plane = |a: usize, b: usize| {
        SectionalComparison::from_operators(&full.operator, &lc.operator, &gamma, f, &basis(a), &basis(b))
    };
    Ok(CurvatureDiagnostics {
        connection_norm: full.operator.max_abs(),
        levi_civita_norm: lc.operator.max_abs(),
        symbol_scale: full.symbol_scale.max(lc.symbol_scale).max(0.25 * f * f),
        comparison_defect: full.operator.distance(&comparison),
        sectional: [plane(0, 1)?, plane(1, 2)?, plane(2, 0)?],
    })
}

fn killing_diagnostics(
    beta: &dyn VectorField,
    connection: &CompatibleConnection,
    p: &Vec3,
    tolerances: &KillingTolerances,
) -> Result<KillingDiagnostics> {
    let scheme = *connection.scheme();
    let metric = connection.metric().as_ref();
    let (extraction, rejection) = match extract_f_from_killing(beta, metric, p, &scheme, tolerances) {
        Ok(e) => (Some(e), None),
        Err(e @ GeometryError::KillingPrecondition { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(KillingDiagnostics {
        lie_derivative: lie_derivative_metric(beta, metric, p, &scheme)?.max_abs(),
        covariant_residual: covariant_constancy_residual(beta, connection, p, &scheme)?.amax(),
        constant_length: constant_length_residual(beta, metric, p, &scheme)?.amax(),
        extraction,
        rejection,
    })
}

/// Runs recovery, assembles the connection, measures curvature and decides the verdict.
pub fn classify(
    averaged: &Arc<AveragedMetric>,
    points: &[Vec3],
    tolerances: &Tolerances,
    killing: Option<&dyn VectorField>,
) -> Result<Classification> {
    tolerances.validate()?;
    if points.is_empty() {
        return Err(GeometryError::InvalidInput("classification needs at least one point".into()));
    }
    let records = recover_on_points(averaged, points, tolerances)?;
    let degenerate_points = records.iter().filter(|r| r.recovery.degenerate).count();
    let f_values: Vec<f64> = records.iter().filter_map(|r| r.recovery.f).collect();
    let max_consistency = records.iter().map(|r| r.consistency).fold(0.0, f64::max);
    let mut summary = ClassificationSummary {
        degenerate_points,
        f_mean: None,
        f_min: None,
        f_max: None,
        f_spread_relative: None,
        max_consistency,
        torsion_model: None,
        max_relative_curvature: None,
        max_curvature: None,
        max_sectional_mismatch: None,
        max_comparison_defect: None,
    };
    if !f_values.is_empty() {
        let (lo, hi, mean) = stats(&f_values);
        summary.f_mean = Some(mean);
        summary.f_min = Some(lo);
        summary.f_max = Some(hi);
        summary.f_spread_relative = Some(if mean != 0.0 { (hi - lo) / mean.abs() } else { hi - lo });
    }
    let mut evidence = vec![format!(
        "{} of {} points have a gamma-spherical indicatrix",
        degenerate_points,
        records.len()
    )];
    evidence.push(format!("max pointwise consistency residual {max_consistency:.3e}"));

    if !(max_consistency <= tolerances.consistency) {
        evidence.push(format!(
            "consistency residual exceeds {:.1e}: no compatible connection with totally anti-symmetric torsion",
            tolerances.consistency
        ));
        let points = records
            .into_iter()
            .map(|recovery| PointDiagnostics { recovery, curvature: None, killing: None })
            .collect();
        return Ok(Classification { verdict: Verdict::Inconsistent, summary, evidence, points });
    }

    let model = torsion_model(&records, tolerances);
    summary.torsion_model = Some(model);
    let connection = assemble_from_model(averaged, model, tolerances);
    // curvature of a chart-sized feature, the floor under the symbol scale
    let domain = averaged.domain();
    let chart_scale = 1.0 / (0..3).map(|i| (domain.max[i] - domain.min[i]).powi(2)).sum::<f64>();
    let mut diagnostics = Vec::with_capacity(records.len());
    let mut max_relative: f64 = 0.0;
    let mut max_curvature: f64 = 0.0;
    let mut max_mismatch: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    for recovery in records {
        let p = Vec3::from(recovery.point);
        let curvature = curvature_diagnostics(&connection, &p)?;
        max_curvature = max_curvature.max(curvature.connection_norm);
        let relative = curvature.connection_norm / curvature.symbol_scale.max(chart_scale);
        max_relative = max_relative.max(relative);
        max_defect = max_defect.max(curvature.comparison_defect);
        if let TorsionModel::Constant { value } = model {
            let quarter = 0.25 * value * value;
            for s in &curvature.sectional {
                max_mismatch = max_mismatch.max((s.levi_civita - quarter).abs() / quarter);
            }
        }
        let killing = match killing {
            Some(beta) => Some(killing_diagnostics(beta, &connection, &p, &tolerances.killing)?),
            None => None,
        };
        diagnostics.push(PointDiagnostics { recovery, curvature: Some(curvature), killing });
    }
    summary.max_relative_curvature = Some(max_relative);
    summary.max_curvature = Some(max_curvature);
    summary.max_comparison_defect = Some(max_defect);
    let flat = max_relative <= tolerances.flatness;
    evidence.push(format!(
        "max |R| {max_curvature:.3e}, {max_relative:.3e} relative to the symbol scale"
    ));

    let verdict = if degenerate_points == diagnostics.len() {
        Verdict::RiemannianDegenerate
    } else {
        match model {
            TorsionModel::Zero if flat => Verdict::ClassicalBerwaldZeroCurvature,
            TorsionModel::Constant { value } if flat => {
                summary.max_sectional_mismatch = Some(max_mismatch);
                evidence.push(format!(
                    "f constant at {value:.9}; sectional curvature of gamma against f^2/4 mismatched by {max_mismatch:.3e}"
                ));
                if max_mismatch <= tolerances.sectional {
                    Verdict::ProperGbConstantPositiveCurvature
                } else {
                    Verdict::NonFlatWithKillingCandidate
                }
            }
            _ => Verdict::NonFlatWithKillingCandidate,
        }
    };
    Ok(Classification { verdict, summary, evidence, points: diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DiffScheme;
    use crate::metrics::{Euclidean, FinslerMetric, QuarticPerturbed};
    use crate::quadrature::SphericalQuadratureRule;

    fn averaged(metric: Arc<dyn FinslerMetric>) -> Arc<AveragedMetric> {
        Arc::new(AveragedMetric::new(metric, SphericalQuadratureRule::new(16, 32).unwrap(), DiffScheme::default()))
    }

    #[test]
    fn plan_points_are_deterministic_and_inside() {
        let domain = ChartBox::cube(0.5);
        let plan = SamplePlan { lattice: [3, 3, 3], random: 5, seed: 7, margin: 0.1 };
        let a = plan.points(&domain).unwrap();
        assert_eq!(a.len(), 32);
        assert_eq!(a, plan.points(&domain).unwrap());
        assert!(a.iter().all(|p| p.amax() <= 0.4));
        assert_eq!(a[13], Vec3::zeros());
        let other = SamplePlan { seed: 8, ..plan.clone() }.points(&domain).unwrap();
        assert_ne!(a[30], other[30]);
        assert!(SamplePlan { margin: 0.5, ..plan }.validate().is_err());
    }

    #[test]
    fn euclidean_is_riemannian_degenerate() {
        let avg = averaged(Arc::new(Euclidean { scale: 1.0, domain: ChartBox::cube(0.5) }));
        let points = SamplePlan { lattice: [2, 1, 1], ..Default::default() }.points(avg.domain()).unwrap();
        let c = classify(&avg, &points, &Tolerances::default(), None).unwrap();
        assert_eq!(c.verdict, Verdict::RiemannianDegenerate);
        assert_eq!(c.summary.degenerate_points, 2);
    }

    #[test]
    fn minkowski_is_classical_berwald() {
        let avg = averaged(Arc::new(QuarticPerturbed::minkowski(0.1, ChartBox::cube(0.5))));
        let points = SamplePlan { lattice: [2, 1, 1], ..Default::default() }.points(avg.domain()).unwrap();
        let c = classify(&avg, &points, &Tolerances::default(), None).unwrap();
        assert_eq!(c.verdict, Verdict::ClassicalBerwaldZeroCurvature, "{:?}", c.summary);
        assert_eq!(c.summary.torsion_model, Some(TorsionModel::Zero));
    }

    #[test]
    fn varying_quartic_is_inconsistent() {
        let avg = averaged(Arc::new(QuarticPerturbed {
            epsilon: 0.3,
            gradient: Vec3::new(2.0, 0.0, 0.0),
            domain: ChartBox::cube(0.4),
        }));
        let c = classify(&avg, &[Vec3::zeros()], &Tolerances::default(), None).unwrap();
        assert_eq!(c.verdict, Verdict::Inconsistent);
        assert!(c.summary.max_consistency > 1e-2);
    }

    #[test]
    fn tolerances_must_be_positive() {
        let t = Tolerances { flatness: 0.0, ..Default::default() };
        assert!(t.validate().is_err());
    }
}

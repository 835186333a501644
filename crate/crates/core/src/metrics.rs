//! Finsler metrics on a chart and the concrete families used by the toolkit.
//!
//! A [`FinslerMetric`] evaluates `F(p, y)` for `y != 0`. Everything derived
//! from it (energy, fiber Hessian, horizontal derivatives) is computed by
//! finite differences, so a metric only has to be evaluable.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{arr, GeometryError, Result};
use crate::field::{ChartBox, MetricField};
use crate::kernel::{gradient, hessian_with_step, spd_check, DiffScheme, SymMat3, Vec3};
use crate::su2;

/// Positively 1-homogeneous, strongly convex norm on each tangent space of a chart.
pub trait FinslerMetric: Send + Sync {
    /// Short human-readable identifier.
    fn name(&self) -> String;
    fn domain(&self) -> &ChartBox;
    /// `F(p, y)` for `y != 0` and `p` inside the domain.
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64>;
}

fn nonzero(y: &Vec3) -> Result<()> {
    if y.iter().all(|c| *c == 0.0) {
        Err(GeometryError::ZeroVector)
    } else {
        Ok(())
    }
}

/// Checked evaluation of `F(p, y)`.
pub fn finsler_norm(metric: &dyn FinslerMetric, p: &Vec3, y: &Vec3) -> Result<f64> {
    nonzero(y)?;
    metric.domain().check(p)?;
    metric.norm(p, y)
}

/// `E = F^2 / 2`.
pub fn energy(metric: &dyn FinslerMetric, p: &Vec3, y: &Vec3) -> Result<f64> {
    let f = finsler_norm(metric, p, y)?;
    Ok(0.5 * f * f)
}

/// Fiber Hessian of `E` without the convexity check; also reports the stencil asymmetry.
pub fn fiber_hessian(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    y: &Vec3,
    scheme: &DiffScheme,
) -> Result<crate::kernel::HessianEstimate> {
    nonzero(y)?;
    metric.domain().check(p)?;
    let h = scheme.fiber_step(y);
    hessian_with_step(
        |w| {
            let f = metric.norm(p, w)?;
            Ok(0.5 * f * f)
        },
        y,
        h,
        scheme.order,
    )
}

/// Riemann-Finsler metric `g_ij = d^2 E / dy^i dy^j`, rejected unless positive definite.
pub fn riemann_finsler_metric(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    y: &Vec3,
    scheme: &DiffScheme,
) -> Result<SymMat3> {
    let g = fiber_hessian(metric, p, y, scheme)?.matrix;
    let check = spd_check(&g);
    if !check.positive_definite {
        return Err(GeometryError::ConvexityViolation {
            point: arr(p),
            direction: arr(y),
            min_eigenvalue: check.min_eigenvalue,
        });
    }
    Ok(g)
}

/// `dF/dy` at `(p, y)`.
pub fn fiber_gradient(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    y: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    nonzero(y)?;
    metric.domain().check(p)?;
    gradient(|w| metric.norm(p, w), y, scheme.fiber_step(y), scheme.order)
}

/// `dF/dx` at `(p, y)` with `y` held fixed in chart components.
pub fn base_gradient(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    y: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    nonzero(y)?;
    let domain = metric.domain();
    gradient(
        |q| {
            domain.check(q)?;
            metric.norm(q, y)
        },
        p,
        scheme.base_step(),
        scheme.order,
    )
}

/// `dE/dx` at `(p, y)`.
pub fn base_gradient_energy(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    y: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    nonzero(y)?;
    let domain = metric.domain();
    gradient(
        |q| {
            domain.check(q)?;
            let f = metric.norm(q, y)?;
            Ok(0.5 * f * f)
        },
        p,
        scheme.base_step(),
        scheme.order,
    )
}

/// `F(p, y) = scale * |y|`.
#[derive(Clone, Debug)]
pub struct Euclidean {
    pub scale: f64,
    pub domain: ChartBox,
}

impl FinslerMetric for Euclidean {
    fn name(&self) -> String {
        format!("euclidean(scale={})", self.scale)
    }
    fn domain(&self) -> &ChartBox {
        &self.domain
    }
    fn norm(&self, _p: &Vec3, y: &Vec3) -> Result<f64> {
        Ok(self.scale * y.norm())
    }
}

/// `F(p, y) = sqrt(a_p(y, y))` for a Riemannian metric field `a`.
#[derive(Clone)]
pub struct Riemannian {
    pub field: Arc<dyn MetricField>,
}

impl FinslerMetric for Riemannian {
    fn name(&self) -> String {
        "riemannian".into()
    }
    fn domain(&self) -> &ChartBox {
        self.field.domain()
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        Ok(self.field.metric_at(p)?.inner(y, y).sqrt())
    }
}

/// Randers norm `|y| + b . y` with `|b| < 1`.
#[derive(Clone, Debug)]
pub struct Randers {
    pub drift: Vec3,
    pub domain: ChartBox,
}

impl Randers {
    pub fn new(drift: Vec3, domain: ChartBox) -> Result<Self> {
        if drift.norm() >= 1.0 {
            return Err(GeometryError::InvalidInput(format!(
                "randers drift must have norm < 1, got {}",
                drift.norm()
            )));
        }
        Ok(Randers { drift, domain })
    }
}

impl FinslerMetric for Randers {
    fn name(&self) -> String {
        format!("randers(b={:?})", arr(&self.drift))
    }
    fn domain(&self) -> &ChartBox {
        &self.domain
    }
    fn norm(&self, _p: &Vec3, y: &Vec3) -> Result<f64> {
        Ok(y.norm() + self.drift.dot(y))
    }
}

/// Quartic-perturbed norm `F^2 = |y|^2 + eps(p) sqrt(sum y_i^4)`.
///
/// `eps(p) = epsilon * (1 + gradient . p)`. With a zero gradient the metric is
/// locally Minkowski; a nonzero gradient changes the indicatrix shape from point
/// to point. Strong convexity holds for `eps > -1/sqrt(3)`.
#[derive(Clone, Debug)]
pub struct QuarticPerturbed {
    pub epsilon: f64,
    pub gradient: Vec3,
    pub domain: ChartBox,
}

impl QuarticPerturbed {
    pub fn minkowski(epsilon: f64, domain: ChartBox) -> Self {
        QuarticPerturbed {
            epsilon,
            gradient: Vec3::zeros(),
            domain,
        }
    }

    pub fn epsilon_at(&self, p: &Vec3) -> f64 {
        self.epsilon * (1.0 + self.gradient.dot(p))
    }
}

impl FinslerMetric for QuarticPerturbed {
    fn name(&self) -> String {
        if self.gradient == Vec3::zeros() {
            format!("quartic(eps={})", self.epsilon)
        } else {
            format!("quartic(eps={}, grad={:?})", self.epsilon, arr(&self.gradient))
        }
    }
    fn domain(&self) -> &ChartBox {
        &self.domain
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        let quartic = y.iter().map(|c| {
            let c2 = c * c;
            c2 * c2
        });
        let f2 = y.norm_squared() + self.epsilon_at(p) * quartic.sum::<f64>().sqrt();
        if f2 <= 0.0 {
            return Err(GeometryError::InvalidInput(format!(
                "quartic norm is not positive at p={:?}, y={:?}",
                arr(p),
                arr(y)
            )));
        }
        Ok(f2.sqrt())
    }
}

/// Focal data of a trifocal ellipsoid body `|w + beta| + |w| + |w - beta| <= c`.
///
/// `beta(p) = beta0 + beta_gradient * p`; `c` must exceed `2 |beta(p)|` so the
/// foci lie in the interior.
#[derive(Clone, Debug, PartialEq)]
pub struct TrifocalSpec {
    pub beta0: Vec3,
    pub beta_gradient: Matrix3<f64>,
    pub c: f64,
}

impl TrifocalSpec {
    pub fn constant(beta: Vec3, c: f64) -> Self {
        TrifocalSpec {
            beta0: beta,
            beta_gradient: Matrix3::zeros(),
            c,
        }
    }

    pub fn beta_at(&self, p: &Vec3) -> Vec3 {
        self.beta0 + self.beta_gradient * p
    }

    /// Focal sum `Phi(w)`.
    pub fn focal_sum(&self, p: &Vec3, w: &Vec3) -> f64 {
        let beta = self.beta_at(p);
        (w + beta).norm() + w.norm() + (w - beta).norm()
    }
}

/// Minkowski functional of the trifocal body: the `t > 0` with `Phi(y / t) = c`.
///
/// Solved for `s = 1/t`, where `s -> Phi(s y)` is convex and increasing. The
/// bracket `[(c - 2|b|) / 3|y|, (c + 2|b|) / 3|y|]` comes from the triangle
/// inequality; Newton steps from the right end stay above the root, and any
/// step leaving the bracket falls back to bisection.
pub fn trifocal_norm(spec: &TrifocalSpec, p: &Vec3, y: &Vec3) -> Result<f64> {
    nonzero(y)?;
    let beta = spec.beta_at(p);
    let b = beta.norm();
    if !(spec.c > 2.0 * b) {
        return Err(GeometryError::RootNotBracketed(format!(
            "trifocal constant {} must exceed 2|beta| = {} at p={:?}",
            spec.c,
            2.0 * b,
            arr(p)
        )));
    }
    let ny = y.norm();
    let phi = |s: f64| -> (f64, f64) {
        let w = y * s;
        let plus = w + beta;
        let minus = w - beta;
        let (np, nm) = (plus.norm(), minus.norm());
        let value = np + s * ny + nm - spec.c;
        let mut slope = ny;
        if np > 0.0 {
            slope += y.dot(&plus) / np;
        }
        if nm > 0.0 {
            slope += y.dot(&minus) / nm;
        }
        (value, slope)
    };
    let mut lo = ((spec.c - 2.0 * b) / (3.0 * ny)).max(0.0);
    let mut hi = (spec.c + 2.0 * b) / (3.0 * ny);
    let mut s = hi;
    for _ in 0..200 {
        let (value, slope) = phi(s);
        if value == 0.0 {
            break;
        }
        if value > 0.0 {
            hi = hi.min(s);
        } else {
            lo = lo.max(s);
        }
        let mut next = if slope > 0.0 { s - value / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 4.0 * f64::EPSILON * s || hi - lo <= 4.0 * f64::EPSILON * hi {
            s = next;
            break;
        }
        s = next;
    }
    let (residual, _) = phi(s);
    if !(residual.abs() <= 1e-12 * spec.c) {
        return Err(GeometryError::RootNotBracketed(format!(
            "trifocal root did not converge (residual {residual:e})"
        )));
    }
    Ok(1.0 / s)
}

/// Finsler metric whose indicatrix at `p` is the trifocal body of `spec`.
#[derive(Clone, Debug)]
pub struct Trifocal {
    pub spec: TrifocalSpec,
    pub domain: ChartBox,
}

impl FinslerMetric for Trifocal {
    fn name(&self) -> String {
        format!("trifocal(beta0={:?}, c={})", arr(&self.spec.beta0), self.spec.c)
    }
    fn domain(&self) -> &ChartBox {
        &self.domain
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        trifocal_norm(&self.spec, p, y)
    }
}

/// Left-invariant extension of a Minkowski norm to SU(2).
///
/// `F(p, y) = radius * F0(dL_{p^-1} y)` in the projection chart of [`crate::su2`];
/// `base` is evaluated at the chart origin and must not depend on the point.
#[derive(Clone)]
pub struct LeftInvariantSu2 {
    pub base: Arc<dyn FinslerMetric>,
    pub radius: f64,
    pub domain: ChartBox,
}

impl LeftInvariantSu2 {
    pub fn new(base: Arc<dyn FinslerMetric>, radius: f64, domain: ChartBox) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(GeometryError::InvalidInput(format!(
                "su2 radius must be positive, got {radius}"
            )));
        }
        for corner in domain.corners() {
            if corner.norm() >= 1.0 {
                return Err(GeometryError::InvalidInput(format!(
                    "su2 chart box must lie inside the unit ball; corner {:?} does not",
                    arr(&corner)
                )));
            }
        }
        Ok(LeftInvariantSu2 {
            base,
            radius,
            domain,
        })
    }
}

impl FinslerMetric for LeftInvariantSu2 {
    fn name(&self) -> String {
        format!("su2[{}](r={})", self.base.name(), self.radius)
    }
    fn domain(&self) -> &ChartBox {
        &self.domain
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        let c = su2::frame_coefficients(p, y)?;
        Ok(self.radius * self.base.norm(&Vec3::zeros(), &c)?)
    }
}

/// `lambda * F(p, y)`.
#[derive(Clone)]
pub struct Scaled {
    pub inner: Arc<dyn FinslerMetric>,
    pub factor: f64,
}

impl FinslerMetric for Scaled {
    fn name(&self) -> String {
        format!("{}*{}", self.factor, self.inner.name())
    }
    fn domain(&self) -> &ChartBox {
        self.inner.domain()
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        Ok(self.factor * self.inner.norm(p, y)?)
    }
}

/// `F(p, A y)` for a fixed invertible `A`.
#[derive(Clone)]
pub struct LinearPullback {
    pub inner: Arc<dyn FinslerMetric>,
    pub matrix: Matrix3<f64>,
}

impl FinslerMetric for LinearPullback {
    fn name(&self) -> String {
        format!("pullback[{}]", self.inner.name())
    }
    fn domain(&self) -> &ChartBox {
        self.inner.domain()
    }
    fn norm(&self, p: &Vec3, y: &Vec3) -> Result<f64> {
        self.inner.norm(p, &(self.matrix * y))
    }
}

/// Sample plan for [`verify_axioms`]: Halton points in the domain and on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AxiomSamplePlan {
    pub points: usize,
    pub directions: usize,
}

impl Default for AxiomSamplePlan {
    fn default() -> Self {
        AxiomSamplePlan {
            points: 8,
            directions: 24,
        }
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut value = 0.0;
    let mut scale = inv;
    while i > 0 {
        value += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    inv = value;
    inv
}

fn halton_direction(i: usize) -> Vec3 {
    let z = 1.0 - 2.0 * radical_inverse(i + 1, 7);
    let phi = std::f64::consts::TAU * radical_inverse(i + 1, 11);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Outcome of the axiom scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    /// max `|F(p, t y) - t F(p, y)| / (t F(p, y))` over `t in {0.5, 2, 3.7}`.
    pub max_homogeneity_residual: f64,
    /// max `|y . dF/dy - F| / F`.
    pub max_euler_residual: f64,
    /// max `|g y - dE/dy| / |dE/dy|`.
    pub max_energy_euler_residual: f64,
    pub min_hessian_eigenvalue: f64,
    /// max `|H(h) - H(h/2)| / |H(h)|` over the sampled fiber Hessians.
    pub max_derivative_instability: f64,
    pub homogeneity_ok: bool,
    pub convexity_ok: bool,
    pub regularity_ok: bool,
    /// First sample where the fiber Hessian was not positive definite.
    pub first_violation: Option<([f64; 3], [f64; 3])>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.homogeneity_ok && self.convexity_ok && self.regularity_ok
    }
}

/// Scans regularity, positive homogeneity and strong convexity over a deterministic plan.
pub fn verify_axioms(
    metric: &dyn FinslerMetric,
    plan: &AxiomSamplePlan,
    scheme: &DiffScheme,
) -> AxiomReport {
    let domain = *metric.domain();
    let mut report = AxiomReport {
        samples: 0,
        max_homogeneity_residual: 0.0,
        max_euler_residual: 0.0,
        max_energy_euler_residual: 0.0,
        min_hessian_eigenvalue: f64::INFINITY,
        max_derivative_instability: 0.0,
        homogeneity_ok: true,
        convexity_ok: true,
        regularity_ok: true,
        first_violation: None,
    };
    // inset so the base point never sits on the boundary
    let inset = |t: f64| 0.1 + 0.8 * t;
    for i in 0..plan.points.max(1) {
        let p = domain.lerp([
            inset(radical_inverse(i + 1, 2)),
            inset(radical_inverse(i + 1, 3)),
            inset(radical_inverse(i + 1, 5)),
        ]);
        for j in 0..plan.directions.max(1) {
            let y = halton_direction(i * plan.directions + j);
            report.samples += 1;
            let sample = (|| -> Result<()> {
                let f = finsler_norm(metric, &p, &y)?;
                for t in [0.5, 2.0, 3.7] {
                    let ft = finsler_norm(metric, &p, &(y * t))?;
                    report.max_homogeneity_residual =
                        report.max_homogeneity_residual.max((ft - t * f).abs() / (t * f));
                }
                let df = fiber_gradient(metric, &p, &y, scheme)?;
                report.max_euler_residual =
                    report.max_euler_residual.max((y.dot(&df) - f).abs() / f);
                let coarse = fiber_hessian(metric, &p, &y, scheme)?.matrix;
                let half = DiffScheme {
                    h_fiber: scheme.h_fiber * 0.5,
                    ..*scheme
                };
                let fine = fiber_hessian(metric, &p, &y, &half)?.matrix;
                let scale = coarse.max_abs().max(f64::MIN_POSITIVE);
                report.max_derivative_instability = report
                    .max_derivative_instability
                    .max((coarse - fine).max_abs() / scale);
                let de = df * f;
                let euler = (coarse.lower(&y) - de).amax() / de.amax().max(f64::MIN_POSITIVE);
                report.max_energy_euler_residual = report.max_energy_euler_residual.max(euler);
                let check = spd_check(&coarse);
                report.min_hessian_eigenvalue =
                    report.min_hessian_eigenvalue.min(check.min_eigenvalue);
                if !check.positive_definite && report.first_violation.is_none() {
                    report.first_violation = Some((arr(&p), arr(&y)));
                }
                Ok(())
            })();
            if sample.is_err() {
                report.regularity_ok = false;
                report.homogeneity_ok = false;
            }
        }
    }
    report.homogeneity_ok &= report.max_homogeneity_residual <= 1e-10;
    report.convexity_ok = report.first_violation.is_none() && report.min_hessian_eigenvalue > 0.0;
    report.regularity_ok &= report.max_derivative_instability <= 1e-5
        && report.max_euler_residual <= 1e-8
        && report.max_energy_euler_residual <= 1e-8;
    report
}

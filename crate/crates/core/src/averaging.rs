//! Averaged Riemannian metric `gamma = int g mu` and recovery of the torsion scalar.
//!
//! For a compatible connection with totally anti-symmetric torsion the horizontal
//! lifts of the Levi-Civita connection of `gamma` satisfy `X_i^h* E = f V_i E` on
//! every indicatrix, where `V_i E = dE/dy (1/2 e_i x_gamma v)`. Integrating against
//! `V_i E` gives `f = (1/sigma) int sum_i V_i E X_i^h* E mu` with
//! `sigma = int sum_i (V_i E)^2 mu`, and `sigma = 0` exactly when the indicatrix is a
//! `gamma`-sphere.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::connection::{christoffel_levi_civita, Christoffel};
use crate::error::{GeometryError, Result};
use crate::field::{ChartBox, MetricField, MetricProvenance, ScalarField};
use crate::kernel::{basis, pairwise_sum, spd_check, DiffScheme, SymMat3, Vec3, VolumeForm};
use crate::metrics::{base_gradient_energy, FinslerMetric};
use crate::quadrature::{indicatrix_samples, IndicatrixSample, SphericalQuadratureRule};

/// Default relative threshold on `sigma` below which the indicatrix counts as a `gamma`-sphere.
pub const RIEMANNIAN_THRESHOLD: f64 = 1e-8;

/// `sum_a w_a J_a g(v_a)` over precomputed samples, checked for positive definiteness.
pub fn average_samples(samples: &[IndicatrixSample]) -> Result<SymMat3> {
    let mut upper = [0.0; 6];
    let mut terms = vec![0.0; samples.len()];
    for (c, slot) in upper.iter_mut().enumerate() {
        for (t, s) in terms.iter_mut().zip(samples) {
            *t = s.measure() * s.metric.upper()[c];
        }
        *slot = pairwise_sum(&terms);
    }
    let gamma = SymMat3::from_upper(upper);
    let check = spd_check(&gamma);
    if !check.positive_definite {
        return Err(GeometryError::NotPositiveDefinite {
            min_eigenvalue: check.min_eigenvalue,
        });
    }
    Ok(gamma)
}

/// `gamma_ij(p) = int_{dK_p} g_ij mu`, uncached.
pub fn averaged_metric(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    rule: &SphericalQuadratureRule,
    scheme: &DiffScheme,
) -> Result<SymMat3> {
    average_samples(&indicatrix_samples(metric, p, rule, scheme)?)
}

fn key(p: &Vec3) -> [u64; 3] {
    // +0.0 and -0.0 are the same point
    [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits)
}

/// The averaged metric of a Finsler metric as a memoized metric field.
///
/// Values are pure functions of the point, so concurrent inserts of the same key
/// are idempotent.
pub struct AveragedMetric {
    finsler: Arc<dyn FinslerMetric>,
    rule: SphericalQuadratureRule,
    scheme: DiffScheme,
    cache: RwLock<HashMap<[u64; 3], SymMat3>>,
}

impl AveragedMetric {
    pub fn new(finsler: Arc<dyn FinslerMetric>, rule: SphericalQuadratureRule, scheme: DiffScheme) -> Self {
        AveragedMetric {
            finsler,
            rule,
            scheme,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn finsler(&self) -> &Arc<dyn FinslerMetric> {
        &self.finsler
    }

    pub fn rule(&self) -> &SphericalQuadratureRule {
        &self.rule
    }

    pub fn scheme(&self) -> &DiffScheme {
        &self.scheme
    }

    pub fn cached_points(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    fn store(&self, p: &Vec3, gamma: SymMat3) {
        if let Ok(mut cache) = self.cache.write() {
            cache.entry(key(p)).or_insert(gamma);
        }
    }
}

impl MetricField for AveragedMetric {
    fn metric_at(&self, p: &Vec3) -> Result<SymMat3> {
        if let Some(g) = self.cache.read().ok().and_then(|c| c.get(&key(p)).copied()) {
            return Ok(g);
        }
        let gamma = averaged_metric(self.finsler.as_ref(), p, &self.rule, &self.scheme)?;
        self.store(p, gamma);
        Ok(gamma)
    }

    fn domain(&self) -> &ChartBox {
        self.finsler.domain()
    }

    fn provenance(&self) -> MetricProvenance {
        MetricProvenance::AveragedFromFinsler
    }
}

/// `(V_1 E, V_2 E, V_3 E)` at `v`, given `dE/dy = g(v) v`.
pub fn v_field_energy(gamma: &VolumeForm, energy_gradient: &Vec3, v: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| 0.5 * energy_gradient.dot(&gamma.cross(&basis(i), v)))
}

/// `X_i^h* E = dE/dx^i - v^j Gamma*^l_ij dE/dy^l` at `(p, v)`.
pub fn horizontal_energy(
    metric: &dyn FinslerMetric,
    levi_civita: &Christoffel,
    p: &Vec3,
    v: &Vec3,
    energy_gradient: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    let dx = base_gradient_energy(metric, p, v, scheme)?;
    Ok(Vec3::from_fn(|i, _| {
        let mut acc = dx[i];
        for j in 0..3 {
            for l in 0..3 {
                acc -= v[j] * levi_civita.get(l, i, j) * energy_gradient[l];
            }
        }
        acc
    }))
}

/// Everything `f` recovery needs at one base point.
pub struct FiberAnalysis {
    pub point: Vec3,
    pub gamma: SymMat3,
    pub levi_civita: Christoffel,
    pub samples: Vec<IndicatrixSample>,
    /// `V_i E` per sample.
    pub v_values: Vec<Vec3>,
    /// `X_i^h* E` per sample.
    pub horizontal_values: Vec<Vec3>,
}

impl FiberAnalysis {
    pub fn new(averaged: &AveragedMetric, p: &Vec3) -> Result<Self> {
        let metric = averaged.finsler.as_ref();
        let scheme = averaged.scheme;
        let samples = indicatrix_samples(metric, p, &averaged.rule, &scheme)?;
        let gamma = average_samples(&samples)?;
        averaged.store(p, gamma);
        let levi_civita = christoffel_levi_civita(averaged, p, &scheme)?;
        let vol = VolumeForm::new(&gamma)?;
        let mut v_values = Vec::with_capacity(samples.len());
        let mut horizontal_values = Vec::with_capacity(samples.len());
        for s in &samples {
            let dy = s.energy_gradient();
            v_values.push(v_field_energy(&vol, &dy, &s.point));
            horizontal_values.push(horizontal_energy(metric, &levi_civita, p, &s.point, &dy, &scheme)?);
        }
        Ok(FiberAnalysis {
            point: *p,
            gamma,
            levi_civita,
            samples,
            v_values,
            horizontal_values,
        })
    }

    fn integrate(&self, mut phi: impl FnMut(usize) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.samples.len())
            .map(|a| self.samples[a].measure() * phi(a))
            .collect();
        pairwise_sum(&terms)
    }

    /// `int mu`.
    pub fn area(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// `sigma = int sum_i (V_i E)^2 mu`.
    pub fn sigma(&self) -> f64 {
        self.integrate(|a| self.v_values[a].norm_squared())
    }

    /// `int sum_i V_i E X_i^h* E mu`.
    pub fn numerator(&self) -> f64 {
        self.integrate(|a| self.v_values[a].dot(&self.horizontal_values[a]))
    }

    /// `sigma / (area * s)` with the mean metric scale `s = tr(gamma) / (3 area)`.
    /// Both scale as `lambda^2` under `F -> lambda F`.
    pub fn sigma_relative(&self) -> f64 {
        let area = self.area();
        let scale = self.gamma.trace() / (3.0 * area);
        self.sigma() / (area * scale)
    }

    pub fn recover(&self, threshold: f64) -> FRecoveryResult {
        let numerator = self.numerator();
        let denominator = self.sigma();
        let sigma_relative = self.sigma_relative();
        let degenerate = !(sigma_relative >= threshold);
        FRecoveryResult {
            f: (!degenerate).then(|| numerator / denominator),
            numerator,
            denominator,
            degenerate,
            sigma_relative,
            area: self.area(),
            n_theta: 0,
            n_phi: 0,
        }
    }

    /// `max_a max_i |X_i^h* E - f V_i E|` over the quadrature nodes.
    pub fn consistency(&self, f: f64) -> f64 {
        self.horizontal_values
            .iter()
            .zip(&self.v_values)
            .map(|(h, v)| (h - v * f).amax())
            .fold(0.0, f64::max)
    }
}

/// Recovered torsion scalar at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FRecoveryResult {
    /// `None` when the indicatrix is a `gamma`-sphere.
    pub f: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub degenerate: bool,
    pub n_theta: usize,
    pub n_phi: usize,
    pub sigma_relative: f64,
    pub area: f64,
}

impl FRecoveryResult {
    /// `f`, with degenerate points read as torsion-free.
    pub fn f_or_zero(&self) -> f64 {
        self.f.unwrap_or(0.0)
    }
}

/// `sigma(p)`.
pub fn sigma(averaged: &AveragedMetric, p: &Vec3) -> Result<f64> {
    Ok(FiberAnalysis::new(averaged, p)?.sigma())
}

/// Recovers `f(p)` with the default degeneracy threshold.
pub fn recover_f(averaged: &AveragedMetric, p: &Vec3) -> Result<FRecoveryResult> {
    recover_f_with_threshold(averaged, p, RIEMANNIAN_THRESHOLD)
}

pub fn recover_f_with_threshold(averaged: &AveragedMetric, p: &Vec3, threshold: f64) -> Result<FRecoveryResult> {
    let mut result = FiberAnalysis::new(averaged, p)?.recover(threshold);
    result.n_theta = averaged.rule.n_theta();
    result.n_phi = averaged.rule.n_phi();
    Ok(result)
}

/// `max |X_i^h* E - f V_i E|` over the indicatrix at `p`, with the recovered `f`
/// (zero at degenerate points).
pub fn pointwise_f_consistency(averaged: &AveragedMetric, p: &Vec3) -> Result<(FRecoveryResult, f64)> {
    let analysis = FiberAnalysis::new(averaged, p)?;
    let mut result = analysis.recover(RIEMANNIAN_THRESHOLD);
    result.n_theta = averaged.rule.n_theta();
    result.n_phi = averaged.rule.n_phi();
    Ok((result, analysis.consistency(result.f_or_zero())))
}

/// `p -> f(p)` by quadrature, memoized; degenerate points give zero.
pub struct RecoveredTorsion {
    averaged: Arc<AveragedMetric>,
    threshold: f64,
    cache: RwLock<HashMap<[u64; 3], f64>>,
}

impl RecoveredTorsion {
    pub fn new(averaged: Arc<AveragedMetric>, threshold: f64) -> Self {
        RecoveredTorsion {
            averaged,
            threshold,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl ScalarField for RecoveredTorsion {
    fn value(&self, p: &Vec3) -> Result<f64> {
        if let Some(f) = self.cache.read().ok().and_then(|c| c.get(&key(p)).copied()) {
            return Ok(f);
        }
        let f = recover_f_with_threshold(&self.averaged, p, self.threshold)?.f_or_zero();
        if let Ok(mut cache) = self.cache.write() {
            cache.insert(key(p), f);
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticMetric;
    use crate::metrics::{energy, Euclidean, LinearPullback, QuarticPerturbed, Randers, Riemannian};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Rotation3};
    use std::f64::consts::PI;

    fn rule() -> SphericalQuadratureRule {
        SphericalQuadratureRule::new(24, 48).unwrap()
    }

    fn averaged(metric: Arc<dyn FinslerMetric>) -> AveragedMetric {
        AveragedMetric::new(metric, rule(), DiffScheme::default())
    }

    fn varying_riemannian() -> Arc<dyn FinslerMetric> {
        let field = AnalyticMetric::new(ChartBox::cube(0.5), |p: &Vec3| {
            SymMat3::from_rows([
                [1.5 + 0.3 * p.y, 0.2 * p.x, 0.1],
                [0.2 * p.x, 1.0 + p.z * p.z, -0.1 * p.y],
                [0.1, -0.1 * p.y, 2.0 + 0.4 * p.x],
            ])
        });
        Arc::new(Riemannian { field: Arc::new(field) })
    }

    fn quartic() -> Arc<dyn FinslerMetric> {
        Arc::new(QuarticPerturbed::minkowski(0.1, ChartBox::cube(0.5)))
    }

    #[test]
    fn euclidean_average_is_four_pi() {
        let e = Euclidean { scale: 1.0, domain: ChartBox::cube(0.5) };
        let g = averaged_metric(&e, &Vec3::zeros(), &rule(), &DiffScheme::default()).unwrap();
        assert!((g - SymMat3::identity().scaled(4.0 * PI)).max_abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn riemannian_average_is_area_times_input() {
        let f = varying_riemannian();
        let p = Vec3::new(0.2, -0.1, 0.3);
        let g = averaged_metric(f.as_ref(), &p, &rule(), &DiffScheme::default()).unwrap();
        let a = SymMat3::from_rows([
            [1.5 + 0.3 * p.y, 0.2 * p.x, 0.1],
            [0.2 * p.x, 1.0 + p.z * p.z, -0.1 * p.y],
            [0.1, -0.1 * p.y, 2.0 + 0.4 * p.x],
        ]);
        assert!((g - a.scaled(4.0 * PI)).max_abs() < 1e-8, "{g:?}");
    }

    #[test]
    fn octahedral_quartic_average_is_isotropic() {
        let g = averaged_metric(quartic().as_ref(), &Vec3::zeros(), &rule(), &DiffScheme::default()).unwrap();
        let c = g.get(0, 0);
        assert!(c > 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { c } else { 0.0 };
                assert!((g.get(i, j) - target).abs() < 1e-8, "{g:?}");
            }
        }
    }

    #[test]
    fn average_commutes_with_linear_isometries() {
        let base: Arc<dyn FinslerMetric> = Arc::new(Randers::new(Vec3::new(0.3, -0.1, 0.2), ChartBox::cube(0.5)).unwrap());
        let p = Vec3::zeros();
        let scheme = DiffScheme::default();
        let g = averaged_metric(base.as_ref(), &p, &rule(), &scheme).unwrap();
        let rotation = *Rotation3::from_euler_angles(0.3, -0.7, 1.1).matrix();
        let permutation = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        for a in [rotation, permutation] {
            // orthogonal for the Euclidean reference: F'(y) = F(A y) gives g' = A^T g A on a rotated indicatrix
            let pulled = LinearPullback { inner: base.clone(), matrix: a };
            let g2 = averaged_metric(&pulled, &p, &rule(), &scheme).unwrap();
            let oracle = a.transpose() * g.matrix() * a;
            assert!((g2.matrix() - oracle).amax() < 1e-8, "{}", (g2.matrix() - oracle).amax());
        }
    }

    #[test]
    fn v_field_vanishes_for_riemannian_fibers() {
        let g = SymMat3::from_rows([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 1.5]]);
        let vol = VolumeForm::new(&g.scaled(4.0 * PI)).unwrap();
        let id = VolumeForm::new(&SymMat3::identity()).unwrap();
        for v in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.8, 0.5)] {
            assert!(v_field_energy(&vol, &g.lower(&v), &v).amax() < 1e-12);
            assert!(v_field_energy(&id, &v, &v).amax() < 1e-15);
        }
    }

    #[test]
    fn v_field_matches_directional_derivative() {
        let f = quartic();
        let p = Vec3::zeros();
        let scheme = DiffScheme::default();
        let gamma = averaged_metric(f.as_ref(), &p, &rule(), &scheme).unwrap();
        let vol = VolumeForm::new(&gamma).unwrap();
        // along (1, 1, 0) the energy gradient is parallel to v, so every V_i E vanishes there
        assert!(v_field_energy(&vol, &Vec3::new(1.0, 1.0, 0.0), &Vec3::new(1.0, 1.0, 0.0)).amax() < 1e-12);
        let u = Vec3::new(1.0, 0.5, 0.2);
        let v = u / f.norm(&p, &u).unwrap();
        let g = crate::metrics::riemann_finsler_metric(f.as_ref(), &p, &v, &scheme).unwrap();
        let values = v_field_energy(&vol, &g.lower(&v), &v);
        assert!(values.amax() > 1e-6, "{values:?}");
        for i in 0..3 {
            let w = vol.cross(&basis(i), &v) * 0.5;
            let h = 1e-4;
            let e = |t: f64| energy(f.as_ref(), &p, &(v + w * t)).unwrap();
            let fd = (e(-2.0 * h) - 8.0 * e(-h) + 8.0 * e(h) - e(2.0 * h)) / (12.0 * h);
            assert_abs_diff_eq!(values[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn sigma_examples() {
        let p = Vec3::new(0.1, 0.0, -0.2);
        let euclid = averaged(Arc::new(Euclidean { scale: 1.0, domain: ChartBox::cube(0.5) }));
        assert!(sigma(&euclid, &p).unwrap() < 1e-12);
        let riem = averaged(varying_riemannian());
        assert!(sigma(&riem, &p).unwrap() < 1e-10);
        let q = averaged(quartic());
        assert!(sigma(&q, &p).unwrap() > 1e-4);
    }

    #[test]
    fn sigma_ignores_rule_orientation() {
        let p = Vec3::zeros();
        let f: Arc<dyn FinslerMetric> = Arc::new(Randers::new(Vec3::new(0.2, 0.1, -0.3), ChartBox::cube(0.5)).unwrap());
        let a = averaged(f.clone());
        let rotated = rule().rotated(Rotation3::from_euler_angles(0.4, 0.9, -0.2).matrix());
        let b = AveragedMetric::new(f, rotated, DiffScheme::default());
        let (sa, sb) = (sigma(&a, &p).unwrap(), sigma(&b, &p).unwrap());
        assert!(sa > 0.0);
        assert!((sa - sb).abs() <= 1e-9 * sa.max(1.0), "{sa} {sb}");
    }

    #[test]
    fn horizontal_energy_vanishes_for_minkowski_and_riemannian() {
        let scheme = DiffScheme::default();
        let q = quartic();
        let v = Vec3::new(0.3, 0.5, -0.7);
        let h = horizontal_energy(q.as_ref(), &Christoffel::zero(), &Vec3::zeros(), &v, &Vec3::new(1.0, 2.0, 3.0), &scheme).unwrap();
        assert!(h.amax() < 1e-12);

        let riem = averaged(varying_riemannian());
        let p = Vec3::new(0.1, 0.2, -0.1);
        let lc = christoffel_levi_civita(&riem, &p, &scheme).unwrap();
        let f = riem.finsler().clone();
        let g = crate::metrics::riemann_finsler_metric(f.as_ref(), &p, &v, &scheme).unwrap();
        let h = horizontal_energy(f.as_ref(), &lc, &p, &v, &g.lower(&v), &scheme).unwrap();
        assert!(h.amax() < 1e-6, "{h:?}");
    }

    #[test]
    fn recovery_on_riemannian_and_minkowski_inputs() {
        let p = Vec3::new(0.1, -0.2, 0.05);
        let riem = averaged(varying_riemannian());
        let r = recover_f(&riem, &p).unwrap();
        assert!(r.degenerate && r.f.is_none(), "{r:?}");

        let q = averaged(quartic());
        let (r, residual) = pointwise_f_consistency(&q, &p).unwrap();
        assert!(!r.degenerate);
        assert!(r.f.unwrap().abs() <= 1e-6, "{r:?}");
        assert!(residual <= 1e-6);
        assert_eq!((r.n_theta, r.n_phi), (24, 48));
    }

    #[test]
    fn cache_reuses_values() {
        let q = averaged(quartic());
        let p = Vec3::new(0.1, 0.1, 0.1);
        let a = q.metric_at(&p).unwrap();
        assert_eq!(q.cached_points(), 1);
        assert_eq!(q.metric_at(&p).unwrap(), a);
        assert_eq!(q.metric_at(&Vec3::new(-0.0, 0.0, 0.0)).unwrap(), q.metric_at(&Vec3::zeros()).unwrap());
        assert_eq!(q.cached_points(), 2);
        assert_eq!(q.provenance(), MetricProvenance::AveragedFromFinsler);
    }
}

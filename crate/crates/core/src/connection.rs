//! Linear connections on a chart: Levi-Civita, the cross-product family
//! `nabla = nabla* + (f/2) X x Y`, torsion, and parallel transport.
//!
//! Christoffel symbols follow `nabla_{d_i} d_j = Gamma^k_ij d_k`, so parallel
//! fields satisfy `X'^k = -c'^i X^j Gamma^k_ij`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::field::{MetricField, ScalarField};
use crate::kernel::{basis, gradient, partials, DiffScheme, SymMat3, Vec3, VolumeForm};
use crate::metrics::{base_gradient, fiber_gradient, finsler_norm, FinslerMetric};

type Tensor3 = [[[f64; 3]; 3]; 3];

/// Christoffel symbols, indexed `[k][i][j]` for `Gamma^k_ij`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Christoffel(pub Tensor3);

impl Christoffel {
    pub fn zero() -> Self {
        Christoffel([[[0.0; 3]; 3]; 3])
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][i][j]
    }

    /// `Gamma^k_ij x^i y^j`, i.e. `nabla_x y` for constant-component `y`.
    pub fn contract(&self, x: &Vec3, y: &Vec3) -> Vec3 {
        Vec3::from_fn(|k, _| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += self.0[k][i][j] * x[i] * y[j];
                }
            }
            acc
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `Gamma^k_(ij)`.
    pub fn symmetric_part(&self) -> Christoffel {
        let mut out = Christoffel::zero();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out.0[k][i][j] = 0.5 * (self.0[k][i][j] + self.0[k][j][i]);
                }
            }
        }
        out
    }

    pub fn flat(&self) -> [f64; 27] {
        let mut out = [0.0; 27];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out[9 * k + 3 * i + j] = self.0[k][i][j];
                }
            }
        }
        out
    }

    pub fn from_flat(flat: [f64; 27]) -> Self {
        let mut out = Christoffel::zero();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out.0[k][i][j] = flat[9 * k + 3 * i + j];
                }
            }
        }
        out
    }

    /// Max difference to another set of symbols.
    pub fn distance(&self, other: &Christoffel) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Linear connection on a chart.
pub trait ConnectionField: Send + Sync {
    fn christoffel(&self, p: &Vec3) -> Result<Christoffel>;
}

/// `Gamma = 0` in the chart.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatConnection;

impl ConnectionField for FlatConnection {
    fn christoffel(&self, _p: &Vec3) -> Result<Christoffel> {
        Ok(Christoffel::zero())
    }
}

/// Connection given by closed-form symbols.
pub struct AnalyticConnection<F>(pub F);

impl<F> ConnectionField for AnalyticConnection<F>
where
    F: Fn(&Vec3) -> Christoffel + Send + Sync,
{
    fn christoffel(&self, p: &Vec3) -> Result<Christoffel> {
        Ok((self.0)(p))
    }
}

/// Chart derivatives `d_m g_ij`, indexed `[m]`.
pub fn metric_partials(
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<[SymMat3; 3]> {
    let d = partials(
        |q| Ok(metric.metric_at(q)?.upper()),
        p,
        scheme.base_step(),
        scheme.order,
    )?;
    Ok([
        SymMat3::from_upper(d[0]),
        SymMat3::from_upper(d[1]),
        SymMat3::from_upper(d[2]),
    ])
}

/// Levi-Civita symbols `1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)` from central differences.
pub fn christoffel_levi_civita(
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<Christoffel> {
    let g = metric.metric_at(p)?;
    let inv = g
        .matrix()
        .try_inverse()
        .ok_or(GeometryError::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
    let dg = metric_partials(metric, p, scheme)?;
    let mut out = Christoffel::zero();
    for i in 0..3 {
        for j in 0..3 {
            // lowered symbols Gamma_{l,ij}
            let lowered = Vec3::from_fn(|l, _| {
                0.5 * (dg[i].get(j, l) + dg[j].get(i, l) - dg[l].get(i, j))
            });
            let raised = inv * lowered;
            for k in 0..3 {
                out.0[k][i][j] = raised[k];
            }
        }
    }
    Ok(out)
}

/// Levi-Civita connection of a metric field.
#[derive(Clone)]
pub struct LeviCivita {
    pub metric: Arc<dyn MetricField>,
    pub scheme: DiffScheme,
}

impl ConnectionField for LeviCivita {
    fn christoffel(&self, p: &Vec3) -> Result<Christoffel> {
        christoffel_levi_civita(self.metric.as_ref(), p, &self.scheme)
    }
}

/// Torsion scalar of a cross-product connection.
#[derive(Clone)]
pub enum TorsionScalar {
    Constant(f64),
    Field(Arc<dyn ScalarField>),
}

impl TorsionScalar {
    pub fn value(&self, p: &Vec3) -> Result<f64> {
        match self {
            TorsionScalar::Constant(f) => Ok(*f),
            TorsionScalar::Field(field) => field.value(p),
        }
    }

    pub fn gradient(&self, p: &Vec3, scheme: &DiffScheme) -> Result<Vec3> {
        match self {
            TorsionScalar::Constant(_) => Ok(Vec3::zeros()),
            TorsionScalar::Field(field) => {
                gradient(|q| field.value(q), p, scheme.base_step(), scheme.order)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TorsionScalar::Constant(_))
    }
}

impl std::fmt::Debug for TorsionScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TorsionScalar::Constant(v) => write!(f, "Constant({v})"),
            TorsionScalar::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// `nabla_X Y = nabla*_X Y + (f/2) X x_gamma Y`: metric for `gamma`, torsion `f X x_gamma Y`.
#[derive(Clone)]
pub struct CompatibleConnection {
    levi_civita: LeviCivita,
    torsion_scalar: TorsionScalar,
}

/// Builds the cross-product connection of a metric field and a torsion scalar.
pub fn assemble_compatible(
    metric: Arc<dyn MetricField>,
    torsion_scalar: TorsionScalar,
    scheme: DiffScheme,
) -> CompatibleConnection {
    CompatibleConnection {
        levi_civita: LeviCivita { metric, scheme },
        torsion_scalar,
    }
}

impl CompatibleConnection {
    pub fn metric(&self) -> &Arc<dyn MetricField> {
        &self.levi_civita.metric
    }

    pub fn levi_civita(&self) -> &LeviCivita {
        &self.levi_civita
    }

    pub fn torsion_scalar(&self) -> &TorsionScalar {
        &self.torsion_scalar
    }

    pub fn scheme(&self) -> &DiffScheme {
        &self.levi_civita.scheme
    }

    /// `(e_i x_gamma e_j)^k`, indexed `[k][i][j]`.
    pub fn cross_symbols(gamma: &SymMat3) -> Result<Christoffel> {
        let vol = VolumeForm::new(gamma)?;
        let mut out = Christoffel::zero();
        for i in 0..3 {
            for j in 0..3 {
                let c = vol.cross(&basis(i), &basis(j));
                for k in 0..3 {
                    out.0[k][i][j] = c[k];
                }
            }
        }
        Ok(out)
    }
}

impl ConnectionField for CompatibleConnection {
    fn christoffel(&self, p: &Vec3) -> Result<Christoffel> {
        let mut gamma = self.levi_civita.christoffel(p)?;
        let f = self.torsion_scalar.value(p)?;
        if f != 0.0 {
            let cross = Self::cross_symbols(&self.levi_civita.metric.metric_at(p)?)?;
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        gamma.0[k][i][j] += 0.5 * f * cross.0[k][i][j];
                    }
                }
            }
        }
        Ok(gamma)
    }
}

/// `max |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|` at `p`.
pub fn metricity_residual(
    connection: &dyn ConnectionField,
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<f64> {
    let g = metric.metric_at(p)?;
    let dg = metric_partials(metric, p, scheme)?;
    let gamma = connection.christoffel(p)?;
    let mut worst = 0.0_f64;
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut r = dg[k].get(i, j);
                for l in 0..3 {
                    r -= gamma.0[l][k][i] * g.get(l, j) + gamma.0[l][k][j] * g.get(i, l);
                }
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

/// Torsion components `T^k_ij = Gamma^k_ij - Gamma^k_ji`, indexed `[k][i][j]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorsionTensor(pub Tensor3);

impl TorsionTensor {
    pub fn zero() -> Self {
        TorsionTensor([[[0.0; 3]; 3]; 3])
    }

    /// `T(x, y)`.
    pub fn apply(&self, x: &Vec3, y: &Vec3) -> Vec3 {
        Christoffel(self.0).contract(x, y)
    }

    /// Lowered tensor `T_b(e_i, e_j, e_l) = gamma(T(e_i, e_j), e_l)`, indexed `[i][j][l]`.
    pub fn lower(&self, gamma: &SymMat3) -> Tensor3 {
        let mut out = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    out[i][j][l] = (0..3).map(|k| gamma.get(l, k) * self.0[k][i][j]).sum();
                }
            }
        }
        out
    }

    /// Max violation of total anti-symmetry of the lowered tensor.
    pub fn total_antisymmetry_defect(&self, gamma: &SymMat3) -> f64 {
        let t = self.lower(gamma);
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    worst = worst
                        .max((t[i][j][l] + t[j][i][l]).abs())
                        .max((t[i][j][l] + t[i][l][j]).abs())
                        .max((t[i][j][l] + t[l][j][i]).abs());
                }
            }
        }
        worst
    }

    /// Trace covector `T~_i = T^k_ik`.
    pub fn trace(&self) -> Vec3 {
        Vec3::from_fn(|i, _| (0..3).map(|k| self.0[k][i][k]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        Christoffel(self.0).max_abs()
    }

    pub fn distance(&self, other: &TorsionTensor) -> f64 {
        Christoffel(self.0).distance(&Christoffel(other.0))
    }

    fn combine(&self, other: &TorsionTensor, s: f64) -> TorsionTensor {
        let mut out = *self;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out.0[k][i][j] += s * other.0[k][i][j];
                }
            }
        }
        out
    }
}

impl std::ops::Add for TorsionTensor {
    type Output = TorsionTensor;
    fn add(self, rhs: TorsionTensor) -> TorsionTensor {
        self.combine(&rhs, 1.0)
    }
}

impl std::ops::Sub for TorsionTensor {
    type Output = TorsionTensor;
    fn sub(self, rhs: TorsionTensor) -> TorsionTensor {
        self.combine(&rhs, -1.0)
    }
}

pub fn torsion_of(connection: &dyn ConnectionField, p: &Vec3) -> Result<TorsionTensor> {
    let gamma = connection.christoffel(p)?;
    let mut t = TorsionTensor::zero();
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                t.0[k][i][j] = gamma.0[k][i][j] - gamma.0[k][j][i];
            }
        }
    }
    Ok(t)
}

/// `T = A1 + S1 + T2`: axial (totally anti-symmetric) part, remaining trace-free
/// part, and trace part `T2(X, Y) = (T~(X) Y - T~(Y) X) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorsionParts {
    pub axial: TorsionTensor,
    pub traceless: TorsionTensor,
    pub trace: TorsionTensor,
}

impl TorsionParts {
    pub fn recompose(&self) -> TorsionTensor {
        self.axial + self.traceless + self.trace
    }
}

pub fn torsion_decompose(t: &TorsionTensor, gamma: &SymMat3) -> Result<TorsionParts> {
    let vol = VolumeForm::new(gamma)?;
    let tr = t.trace();
    let mut trace = TorsionTensor::zero();
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let dki = if k == i { 1.0 } else { 0.0 };
                let dkj = if k == j { 1.0 } else { 0.0 };
                trace.0[k][i][j] = 0.5 * (tr[i] * dkj - tr[j] * dki);
            }
        }
    }
    let t1 = *t - trace;
    let lowered = t1.lower(gamma);
    // t1 is anti-symmetric in (i, j), so the full alternation is a third of the cyclic sum
    let mut axial = TorsionTensor::zero();
    for i in 0..3 {
        for j in 0..3 {
            let alt = Vec3::from_fn(|l, _| {
                (lowered[i][j][l] + lowered[j][l][i] + lowered[l][i][j]) / 3.0
            });
            let raised = vol.raise(&alt);
            for k in 0..3 {
                axial.0[k][i][j] = raised[k];
            }
        }
    }
    Ok(TorsionParts {
        axial,
        traceless: t1 - axial,
        trace,
    })
}

/// `X_i^h F = dF/dx^i - v^j Gamma^k_ij dF/dy^k` at `(p, v)`.
pub fn compatibility_residual(
    metric: &dyn FinslerMetric,
    connection: &dyn ConnectionField,
    p: &Vec3,
    v: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    let dx = base_gradient(metric, p, v, scheme)?;
    let dy = fiber_gradient(metric, p, v, scheme)?;
    let gamma = connection.christoffel(p)?;
    Ok(Vec3::from_fn(|i, _| {
        let mut r = dx[i];
        for j in 0..3 {
            for k in 0..3 {
                r -= v[j] * gamma.0[k][i][j] * dy[k];
            }
        }
        r
    }))
}

/// Smooth curve `[0, 1] -> chart`.
pub trait Curve: Send + Sync {
    fn position(&self, t: f64) -> Vec3;
    fn velocity(&self, t: f64) -> Vec3;
}

/// `c(t) = start + t * displacement`.
#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub start: Vec3,
    pub displacement: Vec3,
}

impl Curve for Segment {
    fn position(&self, t: f64) -> Vec3 {
        self.start + self.displacement * t
    }
    fn velocity(&self, _t: f64) -> Vec3 {
        self.displacement
    }
}

/// Closed circle `c(t) = center + radius (cos(2 pi t) a + sin(2 pi t) b)`.
#[derive(Clone, Copy, Debug)]
pub struct CircleLoop {
    pub center: Vec3,
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Curve for CircleLoop {
    fn position(&self, t: f64) -> Vec3 {
        let s = std::f64::consts::TAU * t;
        self.center + (self.a * s.cos() + self.b * s.sin()) * self.radius
    }
    fn velocity(&self, t: f64) -> Vec3 {
        let s = std::f64::consts::TAU * t;
        (self.b * s.cos() - self.a * s.sin()) * (self.radius * std::f64::consts::TAU)
    }
}

/// Endpoint and trajectory of a parallel transport.
#[derive(Clone, Debug)]
pub struct TransportResult {
    pub endpoint: Vec3,
    pub steps: usize,
    /// Max-norm change of the endpoint between the last two step counts.
    pub halving_change: f64,
    /// `(t, c(t), X(t))` at every step of the final run.
    pub trajectory: Vec<(f64, Vec3, Vec3)>,
}

/// Halving tolerance of [`parallel_transport`], relative to `|v0|`.
pub const TRANSPORT_HALVING_TOLERANCE: f64 = 1e-8;
const MAX_TRANSPORT_STEPS: usize = 1 << 14;

/// Solves `X'^k = -c'^i X^j Gamma^k_ij(c)` with the classical fourth-order
/// Runge-Kutta method, doubling the step count from `steps` until the endpoint
/// moves by less than [`TRANSPORT_HALVING_TOLERANCE`].
pub fn parallel_transport(
    connection: &dyn ConnectionField,
    curve: &dyn Curve,
    v0: &Vec3,
    steps: usize,
) -> Result<TransportResult> {
    if steps == 0 {
        return Err(GeometryError::InvalidInput("transport needs at least one step".into()));
    }
    // symbols along the curve are reused between refinements
    let mut cache: HashMap<u64, Matrix3<f64>> = HashMap::new();
    let mut generator = |t: f64| -> Result<Matrix3<f64>> {
        if let Some(m) = cache.get(&t.to_bits()) {
            return Ok(*m);
        }
        let gamma = connection.christoffel(&curve.position(t))?;
        let c = curve.velocity(t);
        // X' = A X with A_kj = -c^i Gamma^k_ij
        let a = Matrix3::from_fn(|k, j| -(0..3).map(|i| c[i] * gamma.0[k][i][j]).sum::<f64>());
        cache.insert(t.to_bits(), a);
        Ok(a)
    };
    let mut run = |n: usize| -> Result<Vec<(f64, Vec3, Vec3)>> {
        let h = 1.0 / n as f64;
        let mut x = *v0;
        let mut out = Vec::with_capacity(n + 1);
        out.push((0.0, curve.position(0.0), x));
        for s in 0..n {
            let t0 = s as f64 * h;
            let tm = (2 * s + 1) as f64 * (0.5 * h);
            let t1 = (s + 1) as f64 * h;
            let (a0, am, a1) = (generator(t0)?, generator(tm)?, generator(t1)?);
            let k1 = a0 * x;
            let k2 = am * (x + k1 * (0.5 * h));
            let k3 = am * (x + k2 * (0.5 * h));
            let k4 = a1 * (x + k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            out.push((t1, curve.position(t1), x));
        }
        Ok(out)
    };
    let scale = v0.amax().max(1.0);
    let mut n = steps;
    let mut previous = run(n)?;
    loop {
        let refined = run(2 * n)?;
        let change = (refined.last().unwrap().2 - previous.last().unwrap().2).amax();
        n *= 2;
        if change < TRANSPORT_HALVING_TOLERANCE * scale {
            return Ok(TransportResult {
                endpoint: refined.last().unwrap().2,
                steps: n,
                halving_change: change,
                trajectory: refined,
            });
        }
        if n >= MAX_TRANSPORT_STEPS {
            return Err(GeometryError::TransportUnstable { steps: n, change });
        }
        previous = refined;
    }
}

/// Variation of the Finsler length of a vector transported along a curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LengthDrift {
    pub initial_norm: f64,
    /// `max_t |F(c(t), X(t)) - F(c(0), X(0))|` over the integration steps.
    pub max_drift: f64,
    pub steps: usize,
    pub halving_change: f64,
}

pub fn transport_length_drift(
    metric: &dyn FinslerMetric,
    connection: &dyn ConnectionField,
    curve: &dyn Curve,
    v0: &Vec3,
    steps: usize,
) -> Result<LengthDrift> {
    let transport = parallel_transport(connection, curve, v0, steps)?;
    let initial_norm = finsler_norm(metric, &curve.position(0.0), v0)?;
    let mut max_drift = 0.0_f64;
    for (_, c, x) in &transport.trajectory {
        max_drift = max_drift.max((finsler_norm(metric, c, x)? - initial_norm).abs());
    }
    Ok(LengthDrift {
        initial_norm,
        max_drift,
        steps: transport.steps,
        halving_change: transport.halving_change,
    })
}

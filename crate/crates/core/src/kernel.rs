//! Chart-local linear algebra and finite-difference primitives.
//!
//! Everything here is specific to three dimensions: vectors are
//! [`Vec3`], symmetric bilinear forms are [`SymMat3`], and the metric cross
//! product uses the Riemannian volume form `sqrt(det g) dx^1 ^ dx^2 ^ dx^3`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};

/// Tangent vector or chart point.
pub type Vec3 = Vector3<f64>;

/// Symmetric 3x3 matrix. Symmetry is enforced on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat3(Matrix3<f64>);

impl SymMat3 {
    /// Symmetrizes `m` as `(m + m^T) / 2`.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        SymMat3((m + m.transpose()) * 0.5)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn identity() -> Self {
        SymMat3(Matrix3::identity())
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        SymMat3(Matrix3::from_diagonal(&Vec3::new(a, b, c)))
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMat3(self.0 * s)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `g(a, b)`.
    pub fn inner(&self, a: &Vec3, b: &Vec3) -> f64 {
        a.dot(&(self.0 * b))
    }

    /// Index lowering `g_ij a^j`.
    pub fn lower(&self, a: &Vec3) -> Vec3 {
        self.0 * a
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// The six independent entries `(00, 01, 02, 11, 12, 22)`.
    pub fn upper(&self) -> [f64; 6] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
    }

    pub fn from_upper(u: [f64; 6]) -> Self {
        SymMat3(Matrix3::new(
            u[0], u[1], u[2], u[1], u[3], u[4], u[2], u[4], u[5],
        ))
    }
}

impl std::ops::Add for SymMat3 {
    type Output = SymMat3;
    fn add(self, rhs: SymMat3) -> SymMat3 {
        SymMat3(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SymMat3 {
    type Output = SymMat3;
    fn sub(self, rhs: SymMat3) -> SymMat3 {
        SymMat3(self.0 - rhs.0)
    }
}

/// Result of a positive-definiteness test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpdCheck {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
}

pub fn spd_check(m: &SymMat3) -> SpdCheck {
    let min_eigenvalue = if m.0.iter().all(|x| x.is_finite()) {
        SymmetricEigen::new(m.0).eigenvalues.min()
    } else {
        f64::NAN
    };
    SpdCheck {
        positive_definite: min_eigenvalue > 0.0,
        min_eigenvalue,
    }
}

/// Determinant of the matrix with columns `a | b | c`.
pub fn det3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// Volume form and cross product of a fixed positive definite metric.
///
/// `cross(a, b)` is the unique `c` with `g(c, z) = sqrt(det g) det[a | b | z]`.
#[derive(Clone, Copy, Debug)]
pub struct VolumeForm {
    metric: SymMat3,
    inverse: Matrix3<f64>,
    sqrt_det: f64,
}

impl VolumeForm {
    pub fn new(metric: &SymMat3) -> Result<Self> {
        let check = spd_check(metric);
        if !check.positive_definite {
            return Err(GeometryError::NotPositiveDefinite {
                min_eigenvalue: check.min_eigenvalue,
            });
        }
        let inverse = metric
            .0
            .try_inverse()
            .ok_or(GeometryError::NotPositiveDefinite {
                min_eigenvalue: check.min_eigenvalue,
            })?;
        Ok(VolumeForm {
            metric: *metric,
            inverse,
            sqrt_det: metric.determinant().sqrt(),
        })
    }

    pub fn metric(&self) -> &SymMat3 {
        &self.metric
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    /// Index raising `g^ij a_j`.
    pub fn raise(&self, a: &Vec3) -> Vec3 {
        self.inverse * a
    }

    pub fn cross(&self, a: &Vec3, b: &Vec3) -> Vec3 {
        // lowered components are sqrt(det g) eps_ijk a^i b^j
        self.inverse * (a.cross(b) * self.sqrt_det)
    }

    pub fn volume(&self, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
        self.sqrt_det * det3(a, b, c)
    }
}

pub fn cross_product(metric: &SymMat3, a: &Vec3, b: &Vec3) -> Result<Vec3> {
    Ok(VolumeForm::new(metric)?.cross(a, b))
}

/// Max-norm of `x * (y * z) - (g(x, z) y - g(x, y) z)`.
pub fn triple_product_check(metric: &SymMat3, x: &Vec3, y: &Vec3, z: &Vec3) -> Result<f64> {
    let vol = VolumeForm::new(metric)?;
    let lhs = vol.cross(x, &vol.cross(y, z));
    let rhs = y * metric.inner(x, z) - z * metric.inner(x, y);
    Ok((lhs - rhs).amax())
}

/// Accuracy order of the central difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl TryFrom<u8> for StencilOrder {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(StencilOrder::Second),
            4 => Ok(StencilOrder::Fourth),
            other => Err(format!("unsupported stencil order {other} (expected 2 or 4)")),
        }
    }
}

impl From<StencilOrder> for u8 {
    fn from(o: StencilOrder) -> u8 {
        match o {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

impl StencilOrder {
    /// Offsets (in units of h) and weights of the first-derivative stencil.
    fn first(self) -> &'static [(f64, f64)] {
        match self {
            StencilOrder::Second => &[(-1.0, -0.5), (1.0, 0.5)],
            StencilOrder::Fourth => &[
                (-2.0, 1.0 / 12.0),
                (-1.0, -8.0 / 12.0),
                (1.0, 8.0 / 12.0),
                (2.0, -1.0 / 12.0),
            ],
        }
    }

    /// Off-center offsets and weights of the second-derivative stencil plus the center weight.
    fn second(self) -> (&'static [(f64, f64)], f64) {
        match self {
            StencilOrder::Second => (&[(-1.0, 1.0), (1.0, 1.0)], -2.0),
            StencilOrder::Fourth => (
                &[
                    (-2.0, -1.0 / 12.0),
                    (-1.0, 16.0 / 12.0),
                    (1.0, 16.0 / 12.0),
                    (2.0, -1.0 / 12.0),
                ],
                -30.0 / 12.0,
            ),
        }
    }

    /// Largest stencil offset in units of h.
    pub fn reach(self) -> f64 {
        match self {
            StencilOrder::Second => 1.0,
            StencilOrder::Fourth => 2.0,
        }
    }
}

/// Finite-difference configuration.
///
/// Base steps are absolute chart-coordinate steps. Fiber steps scale with the
/// vector, `h = h_fiber * |y|`, so fiber derivatives respect homogeneity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffScheme {
    pub h_base: f64,
    pub h_fiber: f64,
    pub order: StencilOrder,
}

impl Default for DiffScheme {
    fn default() -> Self {
        DiffScheme {
            h_base: 2e-3,
            h_fiber: 2e-3,
            order: StencilOrder::Fourth,
        }
    }
}

impl DiffScheme {
    pub fn new(h_base: f64, h_fiber: f64, order: StencilOrder) -> Result<Self> {
        let scheme = DiffScheme {
            h_base,
            h_fiber,
            order,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_base > 0.0 && self.h_base.is_finite()) {
            return Err(GeometryError::InvalidInput(format!(
                "h_base must be positive, got {}",
                self.h_base
            )));
        }
        if !(self.h_fiber > 0.0 && self.h_fiber.is_finite()) {
            return Err(GeometryError::InvalidInput(format!(
                "h_fiber must be positive, got {}",
                self.h_fiber
            )));
        }
        Ok(())
    }

    pub fn fiber_step(&self, y: &Vec3) -> f64 {
        self.h_fiber * y.norm().max(f64::MIN_POSITIVE)
    }

    pub fn base_step(&self) -> f64 {
        self.h_base
    }

    /// How far a single base stencil reaches from its center.
    pub fn base_reach(&self) -> f64 {
        self.h_base * self.order.reach()
    }
}

/// Central first derivative `d/dt f(t)` at `t = 0` of a vector-valued function.
pub fn derivative<const N: usize, F>(mut f: F, h: f64, order: StencilOrder) -> Result<[f64; N]>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    let mut out = [0.0; N];
    for &(offset, weight) in order.first() {
        let value = f(offset * h)?;
        for (o, v) in out.iter_mut().zip(value) {
            *o += weight * v;
        }
    }
    for o in out.iter_mut() {
        *o /= h;
    }
    Ok(out)
}

/// Partial derivatives of a vector-valued field along the three coordinate axes.
///
/// `result[m]` is `d/dx^m field(p)`.
pub fn partials<const N: usize, F>(
    mut field: F,
    p: &Vec3,
    h: f64,
    order: StencilOrder,
) -> Result<[[f64; N]; 3]>
where
    F: FnMut(&Vec3) -> Result<[f64; N]>,
{
    let mut out = [[0.0; N]; 3];
    for (m, slot) in out.iter_mut().enumerate() {
        *slot = derivative(
            |t| {
                let mut q = *p;
                q[m] += t;
                field(&q)
            },
            h,
            order,
        )?;
    }
    Ok(out)
}

/// Gradient of a scalar field with step `h`.
pub fn gradient<F>(mut field: F, p: &Vec3, h: f64, order: StencilOrder) -> Result<Vec3>
where
    F: FnMut(&Vec3) -> Result<f64>,
{
    let d = partials(|q| Ok([field(q)?]), p, h, order)?;
    Ok(Vec3::new(d[0][0], d[1][0], d[2][0]))
}

/// Finite-difference Hessian together with its pre-symmetrization asymmetry.
#[derive(Clone, Copy, Debug)]
pub struct HessianEstimate {
    pub matrix: SymMat3,
    /// Max-norm of `H - H^T` before averaging.
    pub asymmetry: f64,
}

/// Hessian of a scalar field at `point`, using the fiber step of `scheme`.
pub fn hessian<F>(field: F, point: &Vec3, scheme: &DiffScheme) -> Result<SymMat3>
where
    F: FnMut(&Vec3) -> Result<f64>,
{
    Ok(hessian_with_step(field, point, scheme.fiber_step(point), scheme.order)?.matrix)
}

/// Central-difference Hessian with an explicit step.
///
/// Diagonal entries use the second-derivative stencil; mixed entries use the
/// tensor product of first-derivative stencils, summed in both index orders so
/// that the rounding asymmetry can be reported.
pub fn hessian_with_step<F>(
    mut field: F,
    point: &Vec3,
    h: f64,
    order: StencilOrder,
) -> Result<HessianEstimate>
where
    F: FnMut(&Vec3) -> Result<f64>,
{
    let center = field(point)?;
    let mut raw = Matrix3::zeros();
    let (offsets, center_weight) = order.second();
    for i in 0..3 {
        let mut acc = center_weight * center;
        for &(offset, weight) in offsets {
            let mut q = *point;
            q[i] += offset * h;
            acc += weight * field(&q)?;
        }
        raw[(i, i)] = acc / (h * h);
    }
    let first = order.first();
    let n = first.len();
    for i in 0..3 {
        for j in (i + 1)..3 {
            let mut grid = vec![0.0; n * n];
            for (a, &(oa, _)) in first.iter().enumerate() {
                for (b, &(ob, _)) in first.iter().enumerate() {
                    let mut q = *point;
                    q[i] += oa * h;
                    q[j] += ob * h;
                    grid[a * n + b] = field(&q)?;
                }
            }
            let mut ij = 0.0;
            for (a, &(_, wa)) in first.iter().enumerate() {
                for (b, &(_, wb)) in first.iter().enumerate() {
                    ij += wa * wb * grid[a * n + b];
                }
            }
            let mut ji = 0.0;
            for (b, &(_, wb)) in first.iter().enumerate() {
                for (a, &(_, wa)) in first.iter().enumerate() {
                    ji += wb * wa * grid[a * n + b];
                }
            }
            raw[(i, j)] = ij / (h * h);
            raw[(j, i)] = ji / (h * h);
        }
    }
    let asymmetry = (raw - raw.transpose()).amax();
    Ok(HessianEstimate {
        matrix: SymMat3::from_matrix(raw),
        asymmetry,
    })
}

/// Pairwise (cascade) summation; order of accumulation is fixed by the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Levi-Civita symbol `eps_ijk`.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Unit coordinate vector `e_i`.
pub fn basis(i: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[i] = 1.0;
    e
}

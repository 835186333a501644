//! Killing fields, covariantly constant sections, and extraction of the torsion
//! scalar from a unit Killing field.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::connection::{christoffel_levi_civita, ConnectionField};
use crate::error::{GeometryError, Result};
use crate::field::{MetricField, VectorField};
use crate::kernel::{basis, gradient, partials, DiffScheme, SymMat3, Vec3, VolumeForm};
use crate::su2;

/// Named vector fields accepted from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorFieldSpec {
    /// Constant chart components.
    Constant { components: [f64; 3] },
    /// `beta(u) = A u + b`.
    Linear {
        matrix: [[f64; 3]; 3],
        #[serde(default)]
        offset: [f64; 3],
    },
    /// Rotation generator about a chart axis, e.g. `(-u2, u1, 0)` for axis 2.
    Rotation { axis: usize },
    /// `scale` times the left-invariant field of the imaginary unit `i_axis` in the SU(2) chart.
    Hopf {
        axis: usize,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl VectorFieldSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            VectorFieldSpec::Rotation { axis } | VectorFieldSpec::Hopf { axis, .. } if *axis > 2 => Err(
                GeometryError::InvalidInput(format!("vector field axis must be 0, 1 or 2, got {axis}")),
            ),
            VectorFieldSpec::Hopf { scale, .. } if !(scale.is_finite() && *scale != 0.0) => Err(
                GeometryError::InvalidInput(format!("hopf field scale must be finite and nonzero, got {scale}")),
            ),
            _ => Ok(()),
        }
    }
}

impl VectorField for VectorFieldSpec {
    fn value(&self, p: &Vec3) -> Result<Vec3> {
        match self {
            VectorFieldSpec::Constant { components } => Ok(Vec3::from(*components)),
            VectorFieldSpec::Linear { matrix, offset } => {
                let m = Matrix3::from_fn(|i, j| matrix[i][j]);
                Ok(m * p + Vec3::from(*offset))
            }
            VectorFieldSpec::Rotation { axis } => Ok(basis(*axis).cross(p)),
            VectorFieldSpec::Hopf { axis, scale } => Ok(su2::left_invariant_field(p, *axis)? * *scale),
        }
    }
}

/// `d_i beta^k`, as a matrix with row `k` and column `i`.
fn jacobian(beta: &dyn VectorField, p: &Vec3, scheme: &DiffScheme) -> Result<Matrix3<f64>> {
    let d = partials(|q| Ok(beta.value(q)?.into()), p, scheme.base_step(), scheme.order)?;
    Ok(Matrix3::from_fn(|k, i| d[i][k]))
}

/// `(L_beta gamma)_ij = beta^k d_k gamma_ij + gamma_kj d_i beta^k + gamma_ik d_j beta^k`.
pub fn lie_derivative_metric(
    beta: &dyn VectorField,
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<SymMat3> {
    let b = beta.value(p)?;
    let g = metric.metric_at(p)?;
    let dg = crate::connection::metric_partials(metric, p, scheme)?;
    let db = jacobian(beta, p, scheme)?;
    let transport = dg[0].matrix() * b[0] + dg[1].matrix() * b[1] + dg[2].matrix() * b[2];
    let stretch = g.matrix() * db;
    Ok(SymMat3::from_matrix(transport + stretch + stretch.transpose()))
}

/// `(nabla beta)^k_i = d_i beta^k + Gamma^k_ij beta^j`, row `k`, column `i`.
pub fn covariant_constancy_residual(
    beta: &dyn VectorField,
    connection: &dyn ConnectionField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<Matrix3<f64>> {
    let b = beta.value(p)?;
    let gamma = connection.christoffel(p)?;
    let db = jacobian(beta, p, scheme)?;
    Ok(Matrix3::from_fn(|k, i| {
        db[(k, i)] + (0..3).map(|j| gamma.get(k, i, j) * b[j]).sum::<f64>()
    }))
}

/// Gradient of `gamma(beta, beta)` at `p`.
pub fn constant_length_residual(
    beta: &dyn VectorField,
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<Vec3> {
    gradient(
        |q| {
            let b = beta.value(q)?;
            Ok(metric.metric_at(q)?.inner(&b, &b))
        },
        p,
        scheme.base_step(),
        scheme.order,
    )
}

/// Thresholds for the preconditions of [`extract_f_from_killing`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KillingTolerances {
    pub lie_derivative: f64,
    pub constant_length: f64,
    pub hesse_antisymmetry: f64,
}

impl Default for KillingTolerances {
    fn default() -> Self {
        KillingTolerances {
            lie_derivative: 1e-4,
            constant_length: 1e-4,
            hesse_antisymmetry: 1e-4,
        }
    }
}

/// Torsion scalar fitted to `nabla*_X beta = (f/2) beta x_gamma X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KillingExtraction {
    pub f: f64,
    /// Max component misfit after the fit.
    pub residual: f64,
    pub lie_derivative: f64,
    pub constant_length: f64,
    pub hesse_antisymmetry: f64,
}

/// Least-squares fit of `f` over the nine components of `nabla* beta` once `beta`
/// is confirmed to be a Killing field of constant length with anti-symmetric
/// Hesse form `gamma(nabla*_X beta, Y)`.
pub fn extract_f_from_killing(
    beta: &dyn VectorField,
    metric: &dyn MetricField,
    p: &Vec3,
    scheme: &DiffScheme,
    tolerances: &KillingTolerances,
) -> Result<KillingExtraction> {
    let lie = lie_derivative_metric(beta, metric, p, scheme)?.max_abs();
    if !(lie <= tolerances.lie_derivative) {
        return Err(GeometryError::KillingPrecondition {
            check: "lie_derivative",
            residual: lie,
            tolerance: tolerances.lie_derivative,
        });
    }
    let length = constant_length_residual(beta, metric, p, scheme)?.amax();
    if !(length <= tolerances.constant_length) {
        return Err(GeometryError::KillingPrecondition {
            check: "constant_length",
            residual: length,
            tolerance: tolerances.constant_length,
        });
    }
    let g = metric.metric_at(p)?;
    let b = beta.value(p)?;
    let lc = christoffel_levi_civita(metric, p, scheme)?;
    let db = jacobian(beta, p, scheme)?;
    // column i is nabla*_{e_i} beta
    let hess_field = Matrix3::from_fn(|k, i| db[(k, i)] + (0..3).map(|j| lc.get(k, i, j) * b[j]).sum::<f64>());
    let hesse = hess_field.transpose() * g.matrix();
    let antisymmetry = (hesse + hesse.transpose()).amax();
    if !(antisymmetry <= tolerances.hesse_antisymmetry) {
        return Err(GeometryError::KillingPrecondition {
            check: "hesse_antisymmetry",
            residual: antisymmetry,
            tolerance: tolerances.hesse_antisymmetry,
        });
    }
    let vol = VolumeForm::new(&g)?;
    let model = Matrix3::from_fn(|k, i| 0.5 * vol.cross(&b, &basis(i))[k]);
    let denom = model.norm_squared();
    let f = if denom > 0.0 {
        hess_field.dot(&model) / denom
    } else {
        0.0
    };
    Ok(KillingExtraction {
        f,
        residual: (hess_field - model * f).amax(),
        lie_derivative: lie,
        constant_length: length,
        hesse_antisymmetry: antisymmetry,
    })
}

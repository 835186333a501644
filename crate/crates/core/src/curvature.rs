//! Curvature of linear connections and the comparison identities for the
//! cross-product family `nabla = nabla* + (f/2) X x Y`.

use serde::Serialize;

use crate::connection::{Christoffel, CompatibleConnection, ConnectionField};
use crate::error::{GeometryError, Result};
use crate::kernel::{basis, partials, DiffScheme, SymMat3, Vec3, VolumeForm};

type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// Components `R^l_ijk` of `R(e_i, e_j) e_k = R^l_ijk e_l`, indexed `[l][i][j][k]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureOperator(pub Tensor4);

impl CurvatureOperator {
    pub fn zero() -> Self {
        CurvatureOperator([[[[0.0; 3]; 3]; 3]; 3])
    }

    /// `R(x, y) z`.
    pub fn apply(&self, x: &Vec3, y: &Vec3, z: &Vec3) -> Vec3 {
        Vec3::from_fn(|l, _| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        acc += self.0[l][i][j][k] * x[i] * y[j] * z[k];
                    }
                }
            }
            acc
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn distance(&self, other: &CurvatureOperator) -> f64 {
        let mut worst = 0.0_f64;
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst = worst.max((self.0[l][i][j][k] - other.0[l][i][j][k]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `R_lijk = gamma_lm R^m_ijk`, indexed `[l][i][j][k]`.
    pub fn lower(&self, gamma: &SymMat3) -> Tensor4 {
        let mut out = [[[[0.0; 3]; 3]; 3]; 3];
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        out[l][i][j][k] = (0..3).map(|m| gamma.get(l, m) * self.0[m][i][j][k]).sum();
                    }
                }
            }
        }
        out
    }

    /// `max |R^l_ijk + R^l_jik|`.
    pub fn pair_antisymmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst = worst.max((self.0[l][i][j][k] + self.0[l][j][i][k]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `max |R_lijk + R_kijl|`, zero for connections metrical for `gamma`.
    pub fn metric_antisymmetry_defect(&self, gamma: &SymMat3) -> f64 {
        let r = self.lower(gamma);
        let mut worst = 0.0_f64;
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst = worst.max((r[l][i][j][k] + r[k][i][j][l]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `max |gamma(R(X,Y)Z, W) - gamma(R(Z,W)X, Y)|` over basis vectors.
    pub fn block_symmetry_defect(&self, gamma: &SymMat3) -> f64 {
        let r = self.lower(gamma);
        let mut worst = 0.0_f64;
        // gamma(R(e_i,e_j)e_k, e_l) = r[l][i][j][k]
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst = worst.max((r[l][i][j][k] - r[j][k][l][i]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Sectional value `gamma(R(x,y)y, x) / |x ^ y|^2`.
    pub fn sectional(&self, gamma: &SymMat3, x: &Vec3, y: &Vec3) -> Result<f64> {
        let gram = gram_determinant(gamma, x, y)?;
        Ok(gamma.inner(&self.apply(x, y, y), x) / gram)
    }
}

impl std::ops::Add for CurvatureOperator {
    type Output = CurvatureOperator;
    fn add(mut self, rhs: CurvatureOperator) -> CurvatureOperator {
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        self.0[l][i][j][k] += rhs.0[l][i][j][k];
                    }
                }
            }
        }
        self
    }
}

fn gram_determinant(gamma: &SymMat3, x: &Vec3, y: &Vec3) -> Result<f64> {
    let (xx, yy, xy) = (gamma.inner(x, x), gamma.inner(y, y), gamma.inner(x, y));
    let gram = xx * yy - xy * xy;
    if !(gram > 1e-12 * xx * yy) {
        return Err(GeometryError::DegeneratePlane { gram });
    }
    Ok(gram)
}

/// `R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik`,
/// with the derivatives of the symbols taken by central differences.
pub fn curvature(connection: &dyn ConnectionField, p: &Vec3, scheme: &DiffScheme) -> Result<CurvatureOperator> {
    Ok(curvature_with_scale(connection, p, scheme)?.operator)
}

/// Curvature together with the size of the terms it is assembled from.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureEstimate {
    pub operator: CurvatureOperator,
    /// `max(|d Gamma|, |Gamma|^2)`; flatness is judged relative to this.
    pub symbol_scale: f64,
}

pub fn curvature_with_scale(
    connection: &dyn ConnectionField,
    p: &Vec3,
    scheme: &DiffScheme,
) -> Result<CurvatureEstimate> {
    let gamma = connection.christoffel(p)?;
    let d = partials(
        |q| Ok(connection.christoffel(q)?.flat()),
        p,
        scheme.base_step(),
        scheme.order,
    )?;
    let dg: [Christoffel; 3] = d.map(Christoffel::from_flat);
    let derivative = dg.iter().fold(0.0_f64, |m, c| m.max(c.max_abs()));
    Ok(CurvatureEstimate {
        operator: curvature_from_symbols(&gamma, &dg),
        symbol_scale: derivative.max(gamma.max_abs().powi(2)),
    })
}

/// Curvature from symbols and their chart derivatives `dg[m] = d_m Gamma`.
pub fn curvature_from_symbols(gamma: &Christoffel, dg: &[Christoffel; 3]) -> CurvatureOperator {
    let g = &gamma.0;
    let mut r = CurvatureOperator::zero();
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut acc = dg[i].0[l][j][k] - dg[j].0[l][i][k];
                    for m in 0..3 {
                        acc += g[l][i][m] * g[m][j][k] - g[l][j][m] * g[m][i][k];
                    }
                    r.0[l][i][j][k] = acc;
                }
            }
        }
    }
    r
}

/// `R*(X,Y)Z + 1/2 ((Xf) Y - (Yf) X) x Z + (f^2/4) (X x Y) x Z`, with `R*` the
/// finite-difference curvature of the Levi-Civita connection.
pub fn comparison_curvature(connection: &CompatibleConnection, p: &Vec3) -> Result<CurvatureOperator> {
    let scheme = *connection.scheme();
    let lc = curvature(connection.levi_civita(), p, &scheme)?;
    Ok(lc + torsion_curvature_terms(connection, p)?)
}

/// The two torsion terms of [`comparison_curvature`].
pub fn torsion_curvature_terms(connection: &CompatibleConnection, p: &Vec3) -> Result<CurvatureOperator> {
    let scheme = *connection.scheme();
    let gamma = connection.metric().metric_at(p)?;
    let vol = VolumeForm::new(&gamma)?;
    let f = connection.torsion_scalar().value(p)?;
    let df = connection.torsion_scalar().gradient(p, &scheme)?;
    let mut r = CurvatureOperator::zero();
    for i in 0..3 {
        for j in 0..3 {
            let (ei, ej) = (basis(i), basis(j));
            let shear = (ej * df[i] - ei * df[j]) * 0.5;
            let normal = vol.cross(&ei, &ej) * (0.25 * f * f);
            for k in 0..3 {
                let ek = basis(k);
                let value = vol.cross(&shear, &ek) + vol.cross(&normal, &ek);
                for l in 0..3 {
                    r.0[l][i][j][k] = value[l];
                }
            }
        }
    }
    Ok(r)
}

/// Both sides of the sectional comparison on the plane spanned by `x` and `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectionalComparison {
    /// `gamma(R*(X,Y)Y, X) / gram`.
    pub levi_civita: f64,
    /// `gamma(R(X,Y)Y, X) / gram`, from the finite-difference curvature of `nabla`.
    pub connection: f64,
    /// `f^2 / 4`.
    pub torsion_term: f64,
    /// `|connection - (levi_civita - torsion_term)|`.
    pub defect: f64,
}

pub fn sectional_comparison(
    connection: &CompatibleConnection,
    p: &Vec3,
    x: &Vec3,
    y: &Vec3,
) -> Result<SectionalComparison> {
    let scheme = *connection.scheme();
    let gamma = connection.metric().metric_at(p)?;
    gram_determinant(&gamma, x, y)?;
    let lc = curvature(connection.levi_civita(), p, &scheme)?;
    let full = curvature(connection, p, &scheme)?;
    let f = connection.torsion_scalar().value(p)?;
    SectionalComparison::from_operators(&full, &lc, &gamma, f, x, y)
}

impl SectionalComparison {
    /// Both sides from precomputed curvatures of `nabla` and `nabla*`.
    pub fn from_operators(
        connection: &CurvatureOperator,
        levi_civita: &CurvatureOperator,
        gamma: &SymMat3,
        f: f64,
        x: &Vec3,
        y: &Vec3,
    ) -> Result<Self> {
        let lc = levi_civita.sectional(gamma, x, y)?;
        let full = connection.sectional(gamma, x, y)?;
        let torsion_term = 0.25 * f * f;
        Ok(SectionalComparison {
            levi_civita: lc,
            connection: full,
            torsion_term,
            defect: (full - (lc - torsion_term)).abs(),
        })
    }
}

/// Cyclic sum `R(X,Y)Z + R(Z,X)Y + R(Y,Z)X` against `(Xf) Y x Z + (Zf) X x Y + (Yf) Z x X`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiDefect {
    pub cyclic_sum: Vec3,
    pub predicted: Vec3,
    /// `max |cyclic_sum - predicted|`.
    pub defect: f64,
}

pub fn jacobi_defect(
    connection: &CompatibleConnection,
    p: &Vec3,
    x: &Vec3,
    y: &Vec3,
    z: &Vec3,
) -> Result<JacobiDefect> {
    let scheme = *connection.scheme();
    let r = curvature(connection, p, &scheme)?;
    jacobi_defect_with(connection, &r, p, x, y, z)
}

/// [`jacobi_defect`] with a precomputed curvature of `connection` at `p`.
pub fn jacobi_defect_with(
    connection: &CompatibleConnection,
    r: &CurvatureOperator,
    p: &Vec3,
    x: &Vec3,
    y: &Vec3,
    z: &Vec3,
) -> Result<JacobiDefect> {
    let gamma = connection.metric().metric_at(p)?;
    let vol = VolumeForm::new(&gamma)?;
    let df = connection.torsion_scalar().gradient(p, connection.scheme())?;
    let cyclic_sum = r.apply(x, y, z) + r.apply(z, x, y) + r.apply(y, z, x);
    let predicted = vol.cross(y, z) * df.dot(x) + vol.cross(x, y) * df.dot(z) + vol.cross(z, x) * df.dot(y);
    Ok(JacobiDefect {
        cyclic_sum,
        predicted,
        defect: (cyclic_sum - predicted).amax(),
    })
}

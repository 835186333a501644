//! Run configuration: TOML in, validated zoo objects out.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use berwald_core::averaging::AveragedMetric;
use berwald_core::classify::{SamplePlan, Tolerances};
use berwald_core::field::{AnalyticMetric, ChartBox, MetricField};
use berwald_core::kernel::{DiffScheme, SymMat3, Vec3};
use berwald_core::killing::VectorFieldSpec;
use berwald_core::metrics::{
    Euclidean, FinslerMetric, LeftInvariantSu2, QuarticPerturbed, Randers, Riemannian, Trifocal, TrifocalSpec,
};
use berwald_core::quadrature::{QuadratureSpec, SphericalQuadratureRule};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub differentiation: DiffScheme,
    #[serde(default)]
    pub sample: SamplePlan,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub connection: ConnectionSpec,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub domain: ChartBox,
    pub metric: MetricSpec,
    /// Candidate unit Killing field.
    #[serde(default)]
    pub killing: Option<VectorFieldSpec>,
}

fn one() -> f64 {
    1.0
}

/// Zoo of Finsler metrics by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `scale * |y|`.
    Euclidean {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `sqrt(a(p)(y, y))` with `a(p) = matrix + sum_m p^m linear[m]`.
    Riemannian {
        matrix: [[f64; 3]; 3],
        #[serde(default)]
        linear: [[[f64; 3]; 3]; 3],
    },
    /// `|y| + drift . y`.
    Randers { drift: [f64; 3] },
    /// `sqrt(|y|^2 + eps(p) |y|_4^2)` with `eps(p) = epsilon (1 + gradient . p)`.
    Quartic {
        epsilon: f64,
        #[serde(default)]
        gradient: [f64; 3],
    },
    /// Gauge of `|w + beta(p)| + |w| + |w - beta(p)| <= c`.
    Trifocal {
        beta: [f64; 3],
        #[serde(default)]
        beta_gradient: [[f64; 3]; 3],
        c: f64,
    },
    /// Left-invariant extension of a point-independent `base` to SU(2).
    Su2 {
        #[serde(default = "one")]
        radius: f64,
        base: Box<MetricSpec>,
    },
}

impl MetricSpec {
    fn is_point_independent(&self) -> bool {
        match self {
            MetricSpec::Euclidean { .. } | MetricSpec::Randers { .. } => true,
            MetricSpec::Riemannian { linear, .. } => linear.iter().flatten().flatten().all(|x| *x == 0.0),
            MetricSpec::Quartic { gradient, .. } => gradient.iter().all(|x| *x == 0.0),
            MetricSpec::Trifocal { beta_gradient, .. } => beta_gradient.iter().flatten().all(|x| *x == 0.0),
            MetricSpec::Su2 { .. } => false,
        }
    }

    /// Builds the metric on `domain`, checking the parameter ranges on the whole box.
    pub fn build(&self, domain: &ChartBox) -> Result<Arc<dyn FinslerMetric>> {
        domain.validate()?;
        let corners: Vec<Vec3> = domain.corners().collect();
        Ok(match self {
            MetricSpec::Euclidean { scale } => {
                ensure!(*scale > 0.0 && scale.is_finite(), "euclidean scale must be positive, got {scale}");
                Arc::new(Euclidean { scale: *scale, domain: *domain })
            }
            MetricSpec::Riemannian { matrix, linear } => {
                let (m, l) = (*matrix, *linear);
                let eval = move |p: &Vec3| {
                    SymMat3::from_matrix(Matrix3::from_fn(|i, j| {
                        m[i][j] + (0..3).map(|k| p[k] * l[k][i][j]).sum::<f64>()
                    }))
                };
                // affine in p, so positive definite on the box iff at its corners
                for c in &corners {
                    let check = berwald_core::kernel::spd_check(&eval(c));
                    ensure!(
                        check.positive_definite,
                        "riemannian matrix is not positive definite at corner {:?} (min eigenvalue {})",
                        c.as_slice(),
                        check.min_eigenvalue
                    );
                }
                let field: Arc<dyn MetricField> = Arc::new(AnalyticMetric::new(*domain, eval));
                Arc::new(Riemannian { field })
            }
            MetricSpec::Randers { drift } => Arc::new(Randers::new(Vec3::from(*drift), *domain)?),
            MetricSpec::Quartic { epsilon, gradient } => {
                let q = QuarticPerturbed { epsilon: *epsilon, gradient: Vec3::from(*gradient), domain: *domain };
                let bound = -1.0 / 3f64.sqrt();
                for c in &corners {
                    let e = q.epsilon_at(c);
                    ensure!(e > bound, "quartic eps(p) = {e} at corner {:?} is not above -1/sqrt(3)", c.as_slice());
                }
                Arc::new(q)
            }
            MetricSpec::Trifocal { beta, beta_gradient, c } => {
                let spec = TrifocalSpec {
                    beta0: Vec3::from(*beta),
                    beta_gradient: Matrix3::from_fn(|i, j| beta_gradient[i][j]),
                    c: *c,
                };
                // |beta(p)| is convex, so its maximum over the box sits at a corner
                for corner in &corners {
                    let b = spec.beta_at(corner).norm();
                    ensure!(*c > 2.0 * b, "trifocal c = {c} must exceed 2|beta| = {} at corner {:?}", 2.0 * b, corner.as_slice());
                }
                Arc::new(Trifocal { spec, domain: *domain })
            }
            MetricSpec::Su2 { radius, base } => {
                ensure!(
                    base.is_point_independent(),
                    "su2 base metric must not depend on the point (zero gradients, no nested su2)"
                );
                let base = base.build(&ChartBox::cube(1.0))?;
                Arc::new(LeftInvariantSu2::new(base, *radius, *domain)?)
            }
        })
    }
}

/// Torsion scalar override for the assembled connection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    /// Constant `f`; when absent `f` is recovered by quadrature.
    #[serde(default)]
    pub f: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Segment { start: [f64; 3], displacement: [f64; 3] },
    Circle { center: [f64; 3], a: [f64; 3], b: [f64; 3], radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSpec {
    /// Random loops checked by `verify-connection`.
    pub loops: usize,
    pub loop_radius: f64,
    /// Initial RK4 step count; doubled until the endpoint settles.
    pub steps: usize,
    /// Allowed `max |F(X_t) - F(X_0)|` per unit chart length of the curve.
    pub drift_tolerance: f64,
    pub seed: u64,
    /// Curve of the `transport` command; a loop around the domain centre when absent.
    pub curve: Option<CurveSpec>,
    pub v0: [f64; 3],
}

impl Default for TransportSpec {
    fn default() -> Self {
        TransportSpec {
            loops: 2,
            loop_radius: 0.1,
            steps: 8,
            drift_tolerance: 1e-5,
            seed: 7,
            curve: None,
            v0: [0.3, -0.5, 0.8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Base point of `export-indicatrix`; the domain centre when absent.
    pub export_point: Option<[f64; 3]>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("berwald-out"), export_point: None }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub n_theta: Option<usize>,
    pub n_phi: Option<usize>,
    pub seed: Option<u64>,
    pub point: Option<[f64; 3]>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).context("invalid configuration")?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(n) = o.n_theta {
            self.quadrature.n_theta = n;
        }
        if let Some(n) = o.n_phi {
            self.quadrature.n_phi = n;
        }
        if let Some(seed) = o.seed {
            self.sample.seed = seed;
            self.transport.seed = seed;
        }
        if let Some(p) = o.point {
            self.output.export_point = Some(p);
        }
    }

    /// Checks everything that can be checked without numerics.
    pub fn validate(&self) -> Result<()> {
        self.manifold.domain.validate()?;
        self.differentiation.validate()?;
        SphericalQuadratureRule::from_spec(&self.quadrature)?;
        self.sample.validate()?;
        self.tolerances.validate()?;
        if let Some(beta) = &self.manifold.killing {
            beta.validate()?;
        }
        if let Some(f) = self.connection.f {
            ensure!(f.is_finite(), "connection.f must be finite");
        }
        let t = &self.transport;
        ensure!(t.steps >= 1, "transport.steps must be at least 1");
        ensure!(t.loop_radius > 0.0 && t.loop_radius.is_finite(), "transport.loop_radius must be positive");
        ensure!(t.drift_tolerance > 0.0, "transport.drift_tolerance must be positive");
        ensure!(Vec3::from(t.v0).norm() > 0.0, "transport.v0 must be nonzero");
        if let Some(CurveSpec::Circle { radius, a, b, .. }) = &t.curve {
            ensure!(*radius > 0.0, "circle radius must be positive");
            let (a, b) = (Vec3::from(*a), Vec3::from(*b));
            if (a.norm() - 1.0).abs() > 1e-9 || (b.norm() - 1.0).abs() > 1e-9 || a.dot(&b).abs() > 1e-9 {
                bail!("circle axes a and b must be orthonormal");
            }
        }
        if let Some(p) = self.output.export_point {
            self.manifold.domain.check(&Vec3::from(p))?;
        }
        self.metric()?;
        Ok(())
    }

    pub fn metric(&self) -> Result<Arc<dyn FinslerMetric>> {
        self.manifold.metric.build(&self.manifold.domain)
    }

    pub fn averaged(&self) -> Result<Arc<AveragedMetric>> {
        Ok(Arc::new(AveragedMetric::new(
            self.metric()?,
            SphericalQuadratureRule::from_spec(&self.quadrature)?,
            self.differentiation,
        )))
    }
}

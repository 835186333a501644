//! Chart domains and the field abstractions evaluated over them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{arr, GeometryError, Result};
use crate::kernel::{spd_check, SymMat3, Vec3};

/// Axis-aligned coordinate box of a chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ChartBox {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = ChartBox { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn cube(half_width: f64) -> Self {
        ChartBox {
            min: [-half_width; 3],
            max: [half_width; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i]) {
                return Err(GeometryError::InvalidInput(format!(
                    "chart box axis {i} is empty: [{}, {}]",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn check(&self, p: &Vec3) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(GeometryError::OutsideChart { point: arr(p) })
        }
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..8).map(move |bits| {
            Vec3::from_fn(|i, _| {
                if bits & (1 << i) == 0 {
                    self.min[i]
                } else {
                    self.max[i]
                }
            })
        })
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    /// Point at fractional coordinates `t` in `[0, 1]^3`.
    pub fn lerp(&self, t: [f64; 3]) -> Vec3 {
        Vec3::from_fn(|i, _| self.min[i] + t[i] * (self.max[i] - self.min[i]))
    }
}

/// Where a metric field came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricProvenance {
    AveragedFromFinsler,
    DirectInput,
}

/// Symmetric positive definite metric as a function of the base point.
pub trait MetricField: Send + Sync {
    fn metric_at(&self, p: &Vec3) -> Result<SymMat3>;
    fn domain(&self) -> &ChartBox;
    fn provenance(&self) -> MetricProvenance;
}

type MetricFn = dyn Fn(&Vec3) -> SymMat3 + Send + Sync;

/// Metric field given by a closed-form expression.
#[derive(Clone)]
pub struct AnalyticMetric {
    domain: ChartBox,
    eval: Arc<MetricFn>,
}

impl AnalyticMetric {
    pub fn new(domain: ChartBox, eval: impl Fn(&Vec3) -> SymMat3 + Send + Sync + 'static) -> Self {
        AnalyticMetric {
            domain,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(domain: ChartBox, metric: SymMat3) -> Self {
        Self::new(domain, move |_| metric)
    }
}

impl fmt::Debug for AnalyticMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticMetric").field("domain", &self.domain).finish()
    }
}

impl MetricField for AnalyticMetric {
    fn metric_at(&self, p: &Vec3) -> Result<SymMat3> {
        self.domain.check(p)?;
        let m = (self.eval)(p);
        let check = spd_check(&m);
        if !check.positive_definite {
            return Err(GeometryError::NotPositiveDefinite {
                min_eigenvalue: check.min_eigenvalue,
            });
        }
        Ok(m)
    }

    fn domain(&self) -> &ChartBox {
        &self.domain
    }

    fn provenance(&self) -> MetricProvenance {
        MetricProvenance::DirectInput
    }
}

/// Real-valued function on the chart.
pub trait ScalarField: Send + Sync {
    fn value(&self, p: &Vec3) -> Result<f64>;
}

impl<F> ScalarField for F
where
    F: Fn(&Vec3) -> f64 + Send + Sync,
{
    fn value(&self, p: &Vec3) -> Result<f64> {
        Ok(self(p))
    }
}

/// Vector field given by its chart components.
pub trait VectorField: Send + Sync {
    fn value(&self, p: &Vec3) -> Result<Vec3>;
}

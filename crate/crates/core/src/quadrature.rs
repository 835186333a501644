//! Integration over indicatrix surfaces.
//!
//! The indicatrix `F(p, .) = 1` is parametrized radially by the unit sphere:
//! `v(u) = u / F(p, u)`. Contracting the volume form of `g` with `v` and
//! pulling back along this map gives the density `sqrt(det g(v)) / F(p, u)^3`
//! against the round area element `sin(theta) dtheta dphi`; the radial part of
//! `dv` drops out of `det[v | dv/dtheta | dv/dphi]`, so no derivative of `F` is
//! needed.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::kernel::{det3, pairwise_sum, DiffScheme, SymMat3, Vec3};
use crate::metrics::{finsler_norm, riemann_finsler_metric, FinslerMetric};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)` times the
/// midpoint rule in `phi`. Nodes never sit on the poles.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalQuadratureRule {
    n_theta: usize,
    n_phi: usize,
    directions: Vec<Vec3>,
    weights: Vec<f64>,
    /// `(theta, phi)` per node, used for mesh export.
    angles: Vec<(f64, f64)>,
}

/// Node counts of a [`SphericalQuadratureRule`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            n_theta: 32,
            n_phi: 64,
        }
    }
}

impl SphericalQuadratureRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 3 {
            return Err(GeometryError::InvalidInput(format!(
                "quadrature needs n_theta >= 2 and n_phi >= 3, got ({n_theta}, {n_phi})"
            )));
        }
        let (cos_nodes, gl_weights) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut angles = Vec::with_capacity(n_theta * n_phi);
        for (&z, &w) in cos_nodes.iter().zip(&gl_weights) {
            let theta = z.acos();
            let r = (1.0 - z * z).sqrt();
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                directions.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
                weights.push(w * dphi);
                angles.push((theta, phi));
            }
        }
        Ok(SphericalQuadratureRule {
            n_theta,
            n_phi,
            directions,
            weights,
            angles,
        })
    }

    pub fn from_spec(spec: &QuadratureSpec) -> Result<Self> {
        Self::new(spec.n_theta, spec.n_phi)
    }

    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            n_theta: self.n_theta,
            n_phi: self.n_phi,
        }
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn angles(&self) -> &[(f64, f64)] {
        &self.angles
    }

    /// Same rule with every direction mapped through the orthogonal matrix `rotation`.
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Self {
        SphericalQuadratureRule {
            directions: self.directions.iter().map(|u| rotation * u).collect(),
            ..self.clone()
        }
    }

    /// Same rule with doubled node counts.
    pub fn refined(&self) -> Result<Self> {
        Self::new(2 * self.n_theta, 2 * self.n_phi)
    }

    /// `sum_a w_a phi(u_a)`: plain integral over the unit sphere.
    pub fn integrate_sphere(&self, mut phi: impl FnMut(&Vec3) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .directions
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * phi(u))
            .collect();
        pairwise_sum(&terms)
    }
}

/// One quadrature node pushed onto the indicatrix.
#[derive(Clone, Copy, Debug)]
pub struct IndicatrixSample {
    pub direction: Vec3,
    pub weight: f64,
    /// `F(p, u)`.
    pub norm: f64,
    /// `v = u / F(p, u)`, a point of the indicatrix.
    pub point: Vec3,
    /// Riemann-Finsler metric at `v`.
    pub metric: SymMat3,
    /// Induced volume form per unit round area: `sqrt(det g(v)) / F(p, u)^3`.
    pub density: f64,
}

impl IndicatrixSample {
    /// Quadrature weight times density.
    pub fn measure(&self) -> f64 {
        self.weight * self.density
    }

    /// `dE/dy` at the sample, through the Euler identity `g(v) v`.
    pub fn energy_gradient(&self) -> Vec3 {
        self.metric.lower(&self.point)
    }
}

/// `u / F(p, u)`.
pub fn indicatrix_point(metric: &dyn FinslerMetric, p: &Vec3, u: &Vec3) -> Result<Vec3> {
    Ok(u / finsler_norm(metric, p, u)?)
}

/// Induced volume form `mu_v(t1, t2) = sqrt(det g(v)) det[v | t1 | t2]` at an indicatrix point.
pub fn mu_density(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    v: &Vec3,
    t1: &Vec3,
    t2: &Vec3,
    scheme: &DiffScheme,
) -> Result<f64> {
    let f = finsler_norm(metric, p, v)?;
    if (f - 1.0).abs() > 1e-10 {
        return Err(GeometryError::InvalidInput(format!(
            "mu is evaluated on the indicatrix, but F(p, v) = {f}"
        )));
    }
    let g = riemann_finsler_metric(metric, p, v, scheme)?;
    Ok(g.determinant().sqrt() * det3(v, t1, t2))
}

/// Evaluates every node of `rule` on the indicatrix at `p`.
pub fn indicatrix_samples(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    rule: &SphericalQuadratureRule,
    scheme: &DiffScheme,
) -> Result<Vec<IndicatrixSample>> {
    metric.domain().check(p)?;
    rule.directions()
        .iter()
        .zip(rule.weights())
        .enumerate()
        .map(|(node, (u, &weight))| {
            let wrap = |e: GeometryError| GeometryError::QuadratureNode {
                node,
                source: Box::new(e),
            };
            let norm = metric.norm(p, u).map_err(wrap)?;
            let point = u / norm;
            let g = riemann_finsler_metric(metric, p, &point, scheme).map_err(wrap)?;
            Ok(IndicatrixSample {
                direction: *u,
                weight,
                norm,
                point,
                metric: g,
                density: g.determinant().sqrt() / (norm * norm * norm),
            })
        })
        .collect()
}

/// `sum_a w_a phi(sample_a) J_a` over precomputed samples.
pub fn integrate_samples(samples: &[IndicatrixSample], mut phi: impl FnMut(&IndicatrixSample) -> f64) -> f64 {
    let terms: Vec<f64> = samples.iter().map(|s| s.measure() * phi(s)).collect();
    pairwise_sum(&terms)
}

/// `int_{dK_p} phi mu`.
pub fn integrate_over_indicatrix(
    metric: &dyn FinslerMetric,
    p: &Vec3,
    rule: &SphericalQuadratureRule,
    scheme: &DiffScheme,
    phi: impl FnMut(&IndicatrixSample) -> f64,
) -> Result<f64> {
    let samples = indicatrix_samples(metric, p, rule, scheme)?;
    Ok(integrate_samples(&samples, phi))
}

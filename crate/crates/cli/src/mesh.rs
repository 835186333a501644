//! Triangulated indicatrix in Wavefront OBJ form.

use std::fmt::Write as _;

use anyhow::Result;
use berwald_core::kernel::Vec3;
use berwald_core::metrics::FinslerMetric;
use berwald_core::quadrature::{indicatrix_point, SphericalQuadratureRule};
use serde::Serialize;

/// Vertices on the indicatrix and outward-oriented triangles (0-based).
#[derive(Clone, Debug)]
pub struct IndicatrixMesh {
    pub point: Vec3,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub point: [f64; 3],
    pub vertices: usize,
    pub faces: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    pub radius_ratio: f64,
    /// Volume enclosed by the triangulation.
    pub enclosed_volume: f64,
}

/// Rings of the quadrature grid plus the two poles.
pub fn indicatrix_mesh(metric: &dyn FinslerMetric, p: &Vec3, rule: &SphericalQuadratureRule) -> Result<IndicatrixMesh> {
    let (n_rings, n_phi) = (rule.n_theta(), rule.n_phi());
    let mut directions = Vec::with_capacity(rule.len() + 2);
    directions.push(Vec3::new(0.0, 0.0, -1.0));
    // rings run from the south to the north pole
    let mut rings: Vec<usize> = (0..n_rings).collect();
    rings.sort_by(|a, b| rule.directions()[a * n_phi].z.total_cmp(&rule.directions()[b * n_phi].z));
    for &r in &rings {
        directions.extend_from_slice(&rule.directions()[r * n_phi..(r + 1) * n_phi]);
    }
    directions.push(Vec3::new(0.0, 0.0, 1.0));
    let vertices = directions
        .iter()
        .map(|u| indicatrix_point(metric, p, u))
        .collect::<berwald_core::Result<Vec<_>>>()?;

    let south = 0;
    let north = vertices.len() - 1;
    let at = |ring: usize, k: usize| 1 + ring * n_phi + k % n_phi;
    let mut faces = Vec::with_capacity(2 * n_rings * n_phi);
    for k in 0..n_phi {
        faces.push([south, at(0, k + 1), at(0, k)]);
    }
    for ring in 0..n_rings - 1 {
        for k in 0..n_phi {
            faces.push([at(ring, k), at(ring, k + 1), at(ring + 1, k + 1)]);
            faces.push([at(ring, k), at(ring + 1, k + 1), at(ring + 1, k)]);
        }
    }
    for k in 0..n_phi {
        faces.push([north, at(n_rings - 1, k), at(n_rings - 1, k + 1)]);
    }
    Ok(IndicatrixMesh { point: *p, vertices, faces })
}

impl IndicatrixMesh {
    pub fn to_obj(&self, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for v in &self.vertices {
            let _ = writeln!(out, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    /// Signed volume; positive for outward orientation.
    pub fn enclosed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn summary(&self) -> MeshSummary {
        let radii = self.vertices.iter().map(|v| v.norm());
        let (lo, hi) = radii.fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        MeshSummary {
            point: [self.point.x, self.point.y, self.point.z],
            vertices: self.vertices.len(),
            faces: self.faces.len(),
            min_radius: lo,
            max_radius: hi,
            radius_ratio: hi / lo,
            enclosed_volume: self.enclosed_volume(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use berwald_core::field::ChartBox;
    use berwald_core::metrics::Euclidean;

    #[test]
    fn sphere_mesh_is_closed_and_outward() {
        let metric = Euclidean { scale: 1.0, domain: ChartBox::cube(1.0) };
        let rule = SphericalQuadratureRule::new(12, 24).unwrap();
        let mesh = indicatrix_mesh(&metric, &Vec3::zeros(), &rule).unwrap();
        assert_eq!(mesh.vertices.len(), 12 * 24 + 2);
        // closed surface: every edge is shared by exactly two faces, once per direction
        let mut edges = std::collections::HashMap::new();
        for f in &mesh.faces {
            for e in 0..3 {
                *edges.entry((f[e], f[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        assert!(edges.iter().all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1)));
        let volume = mesh.enclosed_volume();
        // inscribed polyhedron: slightly below the ball volume
        let ratio = volume / (4.0 / 3.0 * std::f64::consts::PI);
        assert!(ratio > 0.95 && ratio < 1.0, "{ratio}");
        let obj = mesh.to_obj("test");
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), mesh.faces.len());
    }
}

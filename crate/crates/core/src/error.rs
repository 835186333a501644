use thiserror::Error;

/// Errors raised by the geometry pipeline.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("tangent vector is zero (singular locus of the metric)")]
    ZeroVector,

    #[error("point {point:?} lies outside the chart domain")]
    OutsideChart { point: [f64; 3] },

    #[error("strong convexity violated at p={point:?}, y={direction:?} (smallest eigenvalue {min_eigenvalue:e})")]
    ConvexityViolation {
        point: [f64; 3],
        direction: [f64; 3],
        min_eigenvalue: f64,
    },

    #[error("quadrature node {node} failed: {source}")]
    QuadratureNode {
        node: usize,
        #[source]
        source: Box<GeometryError>,
    },

    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),

    #[error("chart jacobian is singular at {point:?}")]
    SingularChart { point: [f64; 3] },

    #[error("vectors span a degenerate plane (gram determinant {gram:e})")]
    DegeneratePlane { gram: f64 },

    #[error("parallel transport did not settle after {steps} steps (halving change {change:e})")]
    TransportUnstable { steps: usize, change: f64 },

    #[error("killing precondition `{check}` failed: residual {residual:e} exceeds {tolerance:e}")]
    KillingPrecondition {
        check: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub(crate) fn arr(v: &nalgebra::Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

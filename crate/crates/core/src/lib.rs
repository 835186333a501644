//! Numerical laboratory for three-dimensional Finsler manifolds: averaged
//! Riemannian metrics, recovery of the compatible connection with totally
//! anti-symmetric torsion, curvature and Killing diagnostics.

pub mod averaging;
pub mod classify;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod field;
pub mod kernel;
pub mod killing;
pub mod metrics;
pub mod quadrature;
pub mod su2;

pub use averaging::{recover_f, AveragedMetric, FRecoveryResult};
pub use classify::{classify, Classification, SamplePlan, Tolerances, Verdict};
pub use connection::{assemble_compatible, Christoffel, CompatibleConnection, ConnectionField, TorsionScalar};
pub use curvature::CurvatureOperator;
pub use error::{GeometryError, Result};
pub use field::{ChartBox, MetricField, ScalarField, VectorField};
pub use kernel::{DiffScheme, SymMat3, Vec3};
pub use metrics::FinslerMetric;
pub use quadrature::{QuadratureSpec, SphericalQuadratureRule};

//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use berwald_core::field::ChartBox;
use berwald_core::metrics::{FinslerMetric, LeftInvariantSu2, QuarticPerturbed, Trifocal, TrifocalSpec};
use berwald_core::Vec3;

pub fn quartic() -> Arc<dyn FinslerMetric> {
    Arc::new(QuarticPerturbed::minkowski(0.1, ChartBox::cube(0.5)))
}

pub fn trifocal() -> Arc<dyn FinslerMetric> {
    Arc::new(Trifocal { spec: TrifocalSpec::constant(Vec3::new(0.0, 0.0, 0.4), 3.0), domain: ChartBox::cube(0.5) })
}

pub fn su2() -> Arc<dyn FinslerMetric> {
    let base = Arc::new(QuarticPerturbed::minkowski(0.1, ChartBox::cube(1.0)));
    Arc::new(LeftInvariantSu2::new(base, 1.0, ChartBox::cube(0.4)).expect("valid su2 chart"))
}

pub fn base_point() -> Vec3 {
    Vec3::new(0.1, -0.2, 0.15)
}

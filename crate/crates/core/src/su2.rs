//! Projection chart on SU(2) = S^3 around the identity.
//!
//! A unit quaternion `q = (w, x)` with `w = sqrt(1 - |x|^2) > 0` has chart
//! coordinates `x`. The left-invariant frame `q * i_a` (imaginary units
//! `i_1, i_2, i_3`) pushes forward to the columns of
//! `M(x) = w I + [x]_x`, i.e. `M e_a = w e_a + x * e_a`.

use nalgebra::Matrix3;

use crate::error::{arr, GeometryError, Result};
use crate::kernel::Vec3;

/// Scalar part `w = sqrt(1 - |x|^2)` of the quaternion at chart point `x`.
pub fn scalar_part(x: &Vec3) -> Result<f64> {
    let w2 = 1.0 - x.norm_squared();
    if w2 <= 0.0 || !w2.is_finite() {
        return Err(GeometryError::SingularChart { point: arr(x) });
    }
    Ok(w2.sqrt())
}

/// Chart components of the left-invariant frame at `x` (columns).
pub fn left_frame(x: &Vec3) -> Result<Matrix3<f64>> {
    let w = scalar_part(x)?;
    Ok(Matrix3::new(
        w, -x.z, x.y, //
        x.z, w, -x.x, //
        -x.y, x.x, w,
    ))
}

/// Coefficients of `y` in the left-invariant frame, i.e. `dL_{q^-1} y`.
///
/// Uses `M^-1 = (I + x x^T / w^2) M^T`, which follows from `M^T M = I - x x^T`.
pub fn frame_coefficients(x: &Vec3, y: &Vec3) -> Result<Vec3> {
    let w = scalar_part(x)?;
    Ok(y * w - x.cross(y) + x * (x.dot(y) / w))
}

/// Left-invariant field generated by the imaginary unit `i_axis`.
pub fn left_invariant_field(x: &Vec3, axis: usize) -> Result<Vec3> {
    Ok(left_frame(x)?.column(axis).into_owned())
}

/// Norm of `y` under the round metric of the radius-`radius` three-sphere.
pub fn round_norm(x: &Vec3, y: &Vec3, radius: f64) -> Result<f64> {
    let w = scalar_part(x)?;
    let xy = x.dot(y);
    Ok(radius * (y.norm_squared() + xy * xy / (w * w)).sqrt())
}

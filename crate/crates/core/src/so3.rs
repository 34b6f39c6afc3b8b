//! Rotation kernel: skew operator, exponential and logarithm maps on SO(3),
//! and axis-angle decomposition.
//!
//! All functions are pure and operate on `f64` values. Matrices use nalgebra's
//! `Matrix3<f64>`; the newtypes below carry the invariants (orthogonality,
//! unit norm) that the rest of the crate relies on.

use std::f64::consts::PI;
use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Vector3};

use crate::error::{CalibError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle exp/log switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Within this distance of π the logarithm extracts the axis from the
/// symmetric part of R instead of the (vanishing) antisymmetric part.
const NEAR_PI: f64 = 1e-3;

/// Tolerance used when validating rotation matrices built from raw data.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Unit-norm 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    /// Normalizes `v`, returning `None` for zero or non-finite input.
    pub fn normalize(v: Vec3) -> Option<Self> {
        let n = v.norm();
        if !n.is_finite() || n <= f64::MIN_POSITIVE {
            return None;
        }
        Some(Self(v / n))
    }

    /// Accepts `v` only if it is already unit-norm within 1e-12.
    pub fn from_unit(v: Vec3) -> Result<Self> {
        if (v.norm() - 1.0).abs() > 1e-12 || !v.iter().all(|c| c.is_finite()) {
            return Err(CalibError::InvalidInput(format!(
                "vector {:?} is not unit-norm",
                v.as_slice()
            )));
        }
        Ok(Self(v))
    }

    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    pub fn x() -> Self {
        Self(Vec3::x())
    }

    pub fn y() -> Self {
        Self(Vec3::y())
    }

    pub fn z() -> Self {
        Self(Vec3::z())
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_inner(self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.0.dot(&other.0)
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;

    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

/// Element of SO(3) stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates orthogonality and determinant within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(CalibError::InvalidInput(
                "rotation has non-finite entries".into(),
            ));
        }
        let defect = orthogonality_defect(&m);
        let det = m.determinant();
        if defect > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(CalibError::InvalidInput(format!(
                "matrix is not a rotation (orthogonality defect {defect:e}, det {det})"
            )));
        }
        Ok(Self(m))
    }

    /// Builds a rotation from its three rows.
    pub(crate) fn from_rows_unchecked(r1: &Vec3, r2: &Vec3, r3: &Vec3) -> Self {
        Self(Mat3::from_rows(&[
            r1.transpose(),
            r2.transpose(),
            r3.transpose(),
        ]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Row `i` (0-based) as a column vector.
    pub fn row(&self, i: usize) -> Vec3 {
        self.0.row(i).transpose()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(values: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Mat3::from_row_slice(values))
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Rotation vector: direction is the axis, magnitude the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector(Vec3);

impl RotationVector {
    pub fn new(v: Vec3) -> Self {
        Self(v)
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        Self(axis.as_vec() * angle)
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_vec(self) -> Vec3 {
        self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Equivalent rotation vector with magnitude in [0, π].
    pub fn canonical(&self) -> Self {
        log_so3(&exp_so3(self))
    }
}

/// Axis-angle decomposition. `degenerate` is set when the angle is too small
/// for the axis to carry information, in which case `axis` is `[0, 0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: UnitVec3,
    pub angle: f64,
    pub degenerate: bool,
}

impl AxisAngle {
    pub fn rotation_vector(&self) -> RotationVector {
        RotationVector::from_axis_angle(&self.axis, self.angle)
    }
}

/// Largest absolute entry of `M·Mᵀ − I`.
pub fn orthogonality_defect(m: &Mat3) -> f64 {
    (m * m.transpose() - Mat3::identity()).amax()
}

/// Skew-symmetric matrix `S` with `S·w = v × w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] applied to the antisymmetric part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues' formula.
pub fn exp_so3(theta: &RotationVector) -> RotationMatrix {
    let v = theta.as_vec();
    let angle = v.norm();
    let k = hat(v);
    let k2 = k * k;
    let m = if angle < SMALL_ANGLE {
        Mat3::identity() + k + 0.5 * k2
    } else {
        let half = 0.5 * angle;
        // (1 - cos a) / a² written without cancellation.
        let b = 2.0 * (half.sin() / angle).powi(2);
        Mat3::identity() + (angle.sin() / angle) * k + b * k2
    };
    RotationMatrix(m)
}

/// Principal logarithm, returning a rotation vector with norm in [0, π].
///
/// At exactly π the sign of the axis is ambiguous; it is fixed by making the
/// largest-magnitude component positive.
pub fn log_so3(r: &RotationMatrix) -> RotationVector {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // w = sin(angle) · axis
    let w = vee(m);
    let sin = w.norm();
    let angle = sin.atan2(cos);

    if angle < SMALL_ANGLE {
        return RotationVector(w * (1.0 + angle * angle / 6.0));
    }
    if PI - angle > NEAR_PI {
        return RotationVector(w * (angle / sin));
    }

    // Symmetric part is cos·I + (1 − cos)·a·aᵀ.
    let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * cos;
    let scale = 1.0 - cos;
    let k = sym.diagonal().imax();
    let ak = (sym[(k, k)] / scale).max(0.0).sqrt();
    let mut axis = sym.column(k) / (scale * ak);
    axis /= axis.norm();
    let projection = w.dot(&axis);
    if projection.abs() > 1e-12 {
        if projection < 0.0 {
            axis = -axis;
        }
    } else if axis[axis.iamax()] < 0.0 {
        axis = -axis;
    }
    RotationVector(axis * angle)
}

/// Splits `r` into a unit axis and an angle in [0, π].
///
/// The angle equals `arccos((tr R − 1)/2)`; it is evaluated through the
/// logarithm, which stays accurate near 0 and π where arccos does not.
pub fn axis_angle(r: &RotationMatrix) -> AxisAngle {
    let theta = log_so3(r);
    let angle = theta.angle();
    if angle < SMALL_ANGLE {
        return AxisAngle {
            axis: UnitVec3::z(),
            angle,
            degenerate: true,
        };
    }
    AxisAngle {
        axis: UnitVec3(theta.as_vec() / angle),
        angle,
        degenerate: false,
    }
}

/// Angle between two unit vectors, in [0, π].
///
/// Equal to `acos(a·b)`, but `acos` cannot resolve angles below ~1.5e-8
/// because `a·b` rounds to 1; the `atan2` form stays accurate there.
pub fn angle_between(a: &UnitVec3, b: &UnitVec3) -> f64 {
    a.as_vec().cross(b.as_vec()).norm().atan2(a.dot(b))
}

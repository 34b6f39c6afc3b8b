//! Rectification geometry.
//!
//! The stereo rig maps left-camera points into the right camera frame with
//! `p_r = R·p_l + t`, `‖t‖ = 1`. Rotating each camera by its rectifying
//! rotation (`R_l`, `R_r`) places both image planes on a common plane with
//! the baseline along the rectified x-axis, so that `R_l·p_l = R_r·p_r + i₁`.
//! From that relation `R = R_rᵀ·R_l` and `t = −r_{r,1}` (first row of `R_r`).

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::so3::{Mat3, RotationMatrix, UnitVec3, Vec3};

/// Minimum |i₃ × (−t)| for which the rectified y-axis is well defined.
const BASELINE_EPS: f64 = 1e-9;

/// Minimum rectified depth `r₃ᵀq` of a ray that still yields a residual.
pub const HORIZON_EPS: f64 = 1e-12;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CalibError::InvalidInput(format!(
                "intrinsics need finite values and positive focal lengths, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        let (fx, fy, cx, cy, s) = (self.fx, self.fy, self.cx, self.cy, self.skew);
        Mat3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a camera-frame point (z ≠ 0) to pixels.
    pub fn project(&self, p: &Vec3) -> PixelPoint {
        let x = p.x / p.z;
        let y = p.y / p.z;
        PixelPoint {
            u: self.fx * x + self.skew * y + self.cx,
            v: self.fy * y + self.cy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Back-projected pixel at unit depth (`z = 1`).
///
/// The true camera-frame point is this ray times its unknown depth. Every
/// quantity the solver evaluates is a ratio that is invariant to positive
/// rescaling of the ray, so the depth never needs to be known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedRay(Vec3);

impl NormalizedRay {
    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair {
    pub left: PixelPoint,
    pub right: PixelPoint,
}

impl CorrespondencePair {
    pub fn new(left: PixelPoint, right: PixelPoint) -> Self {
        Self { left, right }
    }
}

/// Matched pixels together with the intrinsics of both cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<CorrespondencePair>,
    pub intrinsics_left: Intrinsics,
    pub intrinsics_right: Intrinsics,
}

impl CorrespondenceSet {
    pub fn new(
        pairs: Vec<CorrespondencePair>,
        intrinsics_left: Intrinsics,
        intrinsics_right: Intrinsics,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(CalibError::InvalidInput(
                "correspondence set is empty".into(),
            ));
        }
        if let Some(i) = pairs
            .iter()
            .position(|p| !p.left.is_finite() || !p.right.is_finite())
        {
            return Err(CalibError::InvalidInput(format!(
                "correspondence {i} has non-finite coordinates"
            )));
        }
        intrinsics_left.validate()?;
        intrinsics_right.validate()?;
        Ok(Self {
            pairs,
            intrinsics_left,
            intrinsics_right,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Back-projected (left, right) rays for every pair, in input order.
    pub fn rays(&self) -> Vec<(NormalizedRay, NormalizedRay)> {
        self.pairs
            .iter()
            .map(|p| {
                (
                    back_project(&self.intrinsics_left, &p.left),
                    back_project(&self.intrinsics_right, &p.right),
                )
            })
            .collect()
    }
}

/// The two rectifying rotations, the optimization variables of the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifyingPair {
    pub left: RotationMatrix,
    pub right: RotationMatrix,
}

/// Relative pose of the right camera: `p_r = rotation·p_l + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: RotationMatrix,
    pub translation: UnitVec3,
}

impl Extrinsics {
    pub fn new(rotation: RotationMatrix, translation: UnitVec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// An ideal, already rectified rig: no rotation and the right camera
    /// displaced along +x (so `t = [−1, 0, 0]`).
    pub fn rectified_rig() -> Self {
        Self {
            rotation: RotationMatrix::identity(),
            translation: -UnitVec3::x(),
        }
    }

    /// Maps a left-camera point into the right camera frame.
    pub fn transform(&self, p_left: &Vec3) -> Vec3 {
        self.rotation.rotate(p_left) + self.translation.as_vec()
    }
}

/// Invertible planar projective map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Mat3);

impl Homography {
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if m.determinant().abs() <= 1e-12 {
            return Err(CalibError::InvalidInput("homography is singular".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, p: &PixelPoint) -> PixelPoint {
        let h = self.0 * Vec3::new(p.u, p.v, 1.0);
        PixelPoint::new(h.x / h.z, h.y / h.z)
    }
}

/// `K⁻¹·[u, v, 1]ᵀ`, which already has unit depth.
pub fn back_project(k: &Intrinsics, p: &PixelPoint) -> NormalizedRay {
    let y = (p.v - k.cy) / k.fy;
    let x = (p.u - k.cx - k.skew * y) / k.fx;
    NormalizedRay(Vec3::new(x, y, 1.0))
}

/// Right rectifying rotation with rows `[−t, i₃ × r₁, r₁ × r₂]`.
///
/// The second row is normalized so that the result is orthonormal.
pub fn build_rr_from_t(t: &UnitVec3) -> Result<RotationMatrix> {
    let r1 = -t.as_vec();
    let c = Vec3::z().cross(&r1);
    let n = c.norm();
    if n <= BASELINE_EPS {
        return Err(CalibError::DegenerateBaseline);
    }
    let r2 = c / n;
    let r3 = r1.cross(&r2);
    Ok(RotationMatrix::from_rows_unchecked(&r1, &r2, &r3))
}

pub fn extract_extrinsics(rect: &RectifyingPair) -> Extrinsics {
    Extrinsics {
        rotation: rect.right.transpose() * rect.left,
        translation: UnitVec3::new_unchecked(-rect.right.row(0)),
    }
}

/// Rectifying pair whose extracted extrinsics equal `ext`, with `R_r` in the
/// canonical form of [`build_rr_from_t`].
pub fn init_from_prior(ext: &Extrinsics) -> Result<RectifyingPair> {
    let right = build_rr_from_t(&ext.translation)?;
    Ok(RectifyingPair {
        left: right * ext.rotation,
        right,
    })
}

/// `(K_new·R_l·K_l⁻¹, K_new·R_r·K_r⁻¹)`.
pub fn rectifying_homographies(
    rect: &RectifyingPair,
    k_left: &Intrinsics,
    k_right: &Intrinsics,
    k_new: &Intrinsics,
) -> Result<(Homography, Homography)> {
    let kn = k_new.matrix();
    let hl = kn * rect.left.matrix() * k_left.inverse_matrix();
    let hr = kn * rect.right.matrix() * k_right.inverse_matrix();
    Ok((Homography::from_matrix(hl)?, Homography::from_matrix(hr)?))
}

/// Rectified `y/z` of a single ray.
pub(crate) fn rectified_row(r: &RotationMatrix, q: &Vec3) -> Result<f64> {
    let a = r.rotate(q);
    if a.z < HORIZON_EPS {
        return Err(CalibError::PointAtHorizon { depth: a.z });
    }
    Ok(a.y / a.z)
}

/// Vertical disparity of two rays in the rectified frames.
pub fn vertical_residual_rays(rect: &RectifyingPair, q_left: &Vec3, q_right: &Vec3) -> Result<f64> {
    Ok(rectified_row(&rect.left, q_left)? - rectified_row(&rect.right, q_right)?)
}

/// `(r_{l,2}ᵀq_l)/(r_{l,3}ᵀq_l) − (r_{r,2}ᵀq_r)/(r_{r,3}ᵀq_r)` with `q`
/// the back-projected pixels. Zero iff the pair is row-aligned after
/// rectification.
pub fn vertical_residual(
    rect: &RectifyingPair,
    pair: &CorrespondencePair,
    k_left: &Intrinsics,
    k_right: &Intrinsics,
) -> Result<f64> {
    let ql = back_project(k_left, &pair.left);
    let qr = back_project(k_right, &pair.right);
    vertical_residual_rays(rect, ql.as_vec(), qr.as_vec())
}

//! Accuracy and robustness metrics against a reference calibration.
//!
//! * `e_t`: angle between the reference and the fused translation direction.
//! * `e_θ`: distance between the reference and the fused rotation vectors.
//! * `σ_t`, `σ_θ`: RMS of the same two errors over the per-pair estimates.
//!
//! All angles are in radians. Angles between directions are `acos(a·b)`,
//! evaluated in the `atan2` form that stays accurate near zero.

use serde::{Deserialize, Serialize};

use crate::aggregate::GlobalEstimate;
use crate::rectification::Extrinsics;
use crate::so3::{angle_between, log_so3, RotationMatrix, RotationVector, UnitVec3};
use crate::solver::PairEstimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceExtrinsics {
    pub rotation: RotationMatrix,
    pub translation: UnitVec3,
    pub theta: RotationVector,
}

impl ReferenceExtrinsics {
    pub fn from_extrinsics(ext: &Extrinsics) -> Self {
        Self {
            rotation: ext.rotation,
            translation: ext.translation,
            theta: log_so3(&ext.rotation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e_t: f64,
    pub e_theta: f64,
    pub sigma_t: f64,
    pub sigma_theta: f64,
    #[serde(rename = "M")]
    pub m: usize,
}

pub fn angular_error_t(reference: &ReferenceExtrinsics, global: &GlobalEstimate) -> f64 {
    angle_between(&reference.translation, &global.translation)
}

pub fn rotation_error_theta(reference: &ReferenceExtrinsics, global: &GlobalEstimate) -> f64 {
    (global.theta.as_vec() - reference.theta.as_vec()).norm()
}

/// RMS angular error of the per-pair translations. 0 for an empty list.
pub fn sigma_t(reference: &ReferenceExtrinsics, estimates: &[PairEstimate]) -> f64 {
    rms(estimates
        .iter()
        .map(|e| angle_between(&reference.translation, &e.translation)))
}

/// RMS rotation-vector distance of the per-pair estimates.
pub fn sigma_theta(reference: &ReferenceExtrinsics, estimates: &[PairEstimate]) -> f64 {
    rms(estimates
        .iter()
        .map(|e| (e.theta.as_vec() - reference.theta.as_vec()).norm()))
}

fn rms(errors: impl ExactSizeIterator<Item = f64>) -> f64 {
    let m = errors.len();
    if m == 0 {
        return 0.0;
    }
    (errors.map(|e| e * e).sum::<f64>() / m as f64).sqrt()
}

pub fn evaluate(
    reference: &ReferenceExtrinsics,
    global: &GlobalEstimate,
    estimates: &[PairEstimate],
) -> MetricsReport {
    MetricsReport {
        e_t: angular_error_t(reference, global),
        e_theta: rotation_error_theta(reference, global),
        sigma_t: sigma_t(reference, estimates),
        sigma_theta: sigma_theta(reference, estimates),
        m: estimates.len(),
    }
}

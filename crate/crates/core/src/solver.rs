//! Single-pair self-calibration.
//!
//! The unknowns are the two rectifying rotations, parameterized by rotation
//! vectors `θ_l`, `θ_r`. The residual vector has `N + 1` entries:
//!
//! * `e₀ = i₂ᵀ·R_r·i₃`, the gauge anchor. Vertical disparities are unchanged
//!   when both cameras are rotated together about the rectified x-axis; `e₀`
//!   pins that rotation by requiring the rectified y-axis of the right camera
//!   to be orthogonal to its optical axis.
//! * `eᵢ`, the rectified vertical disparity of correspondence `i`.
//!
//! The energy `Σ wᵢ·eᵢ²` is minimized with Levenberg-Marquardt under
//! left-multiplicative increments `R ← exp([δ]×)·R` and iteratively
//! re-evaluated Huber weights.

use nalgebra::{SMatrix, SVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::rectification::{
    extract_extrinsics, init_from_prior, rectified_row, CorrespondenceSet, Extrinsics,
    RectifyingPair, HORIZON_EPS,
};
use crate::so3::{
    axis_angle, exp_so3, hat, log_so3, RotationMatrix, RotationVector, UnitVec3, Vec3,
};

pub type JacobianRow = Vector6<f64>;
pub type Increment = Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Huber threshold `c_t` in normalized-ray units.
    pub huber_threshold: f64,
    /// With Huber weighting off every residual has weight 1.
    pub huber_enabled: bool,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// The solve gives up once the damping exceeds this value.
    pub lambda_max: f64,
    /// Convergence threshold on ‖δθ‖₂.
    pub step_tol: f64,
    pub max_iterations: usize,
    pub min_pairs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            huber_threshold: 0.01,
            huber_enabled: true,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_max: 1e10,
            step_tol: 1e-10,
            max_iterations: 100,
            min_pairs: 6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.huber_threshold,
            self.lambda_init,
            self.lambda_up,
            self.lambda_down,
            self.lambda_max,
            self.step_tol,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.max_iterations == 0 || self.min_pairs == 0 {
            return Err(CalibError::InvalidInput(format!(
                "solver settings must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn weight(&self, residual: f64) -> f64 {
        if self.huber_enabled {
            huber_weight(residual, self.huber_threshold)
        } else {
            1.0
        }
    }
}

/// Current rotation vectors together with their rotation matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverState {
    pub theta_left: RotationVector,
    pub theta_right: RotationVector,
    pub left: RotationMatrix,
    pub right: RotationMatrix,
}

impl SolverState {
    pub fn from_thetas(theta_left: RotationVector, theta_right: RotationVector) -> Self {
        Self {
            left: exp_so3(&theta_left),
            right: exp_so3(&theta_right),
            theta_left,
            theta_right,
        }
    }

    pub fn from_rect(rect: &RectifyingPair) -> Self {
        Self::from_thetas(log_so3(&rect.left), log_so3(&rect.right))
    }

    pub fn identity() -> Self {
        Self::from_thetas(RotationVector::zero(), RotationVector::zero())
    }

    pub fn rect(&self) -> RectifyingPair {
        RectifyingPair {
            left: self.left,
            right: self.right,
        }
    }

    /// `R ← exp([δ]×)·R` for both cameras, then `θ ← log(R)`.
    pub fn apply_increment(&self, delta: &Increment) -> Self {
        let dl = RotationVector::new(delta.fixed_rows::<3>(0).into_owned());
        let dr = RotationVector::new(delta.fixed_rows::<3>(3).into_owned());
        let left = exp_so3(&dl) * self.left;
        let right = exp_so3(&dr) * self.right;
        Self::from_thetas(log_so3(&left), log_so3(&right))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Number of linear solves, accepted or rejected.
    pub iterations: usize,
    pub final_energy: f64,
    pub final_step_norm: f64,
    pub converged: bool,
    pub dropped_pairs: usize,
}

/// Per-pair result, shared by the rectification solver and the epipolar
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub rotation: RotationMatrix,
    pub translation: UnitVec3,
    pub axis: UnitVec3,
    pub angle: f64,
    /// Angle below the small-angle threshold; `axis` is a placeholder.
    pub axis_degenerate: bool,
    pub theta: RotationVector,
    pub diagnostics: SolveDiagnostics,
}

impl PairEstimate {
    pub fn from_extrinsics(ext: &Extrinsics, diagnostics: SolveDiagnostics) -> Self {
        let aa = axis_angle(&ext.rotation);
        Self {
            rotation: ext.rotation,
            translation: ext.translation,
            axis: aa.axis,
            angle: aa.angle,
            axis_degenerate: aa.degenerate,
            theta: aa.rotation_vector(),
            diagnostics,
        }
    }

    pub fn extrinsics(&self) -> Extrinsics {
        Extrinsics::new(self.rotation, self.translation)
    }
}

/// Residual vector `[e₀, e₁, …, e_N]`. Entries of pairs that fall on the
/// rectified horizon are 0 and flagged unusable.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    /// `usable[0]` (the anchor) is always true.
    pub usable: Vec<bool>,
}

impl Residuals {
    pub fn usable_pairs(&self) -> usize {
        self.usable[1..].iter().filter(|u| **u).count()
    }

    pub fn dropped_pairs(&self) -> usize {
        self.usable.len() - 1 - self.usable_pairs()
    }
}

/// One Levenberg-Marquardt trial, recorded for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub lambda: f64,
    pub step_norm: f64,
    /// Energy of the current iterate under the weights frozen this iteration.
    pub energy: f64,
    /// Energy of the trial iterate under the same weights; `None` when the
    /// trial lost a previously usable pair.
    pub trial_energy: Option<f64>,
    pub accepted: bool,
}

/// `1` inside the threshold, `c_t/|e|` outside.
pub fn huber_weight(residual: f64, threshold: f64) -> f64 {
    let a = residual.abs();
    if a <= threshold {
        1.0
    } else {
        threshold / a
    }
}

/// Back-projected rays of an observation set.
struct Problem {
    rays: Vec<(Vec3, Vec3)>,
    min_pairs: usize,
}

impl Problem {
    fn new(obs: &CorrespondenceSet, min_pairs: usize) -> Self {
        Self {
            rays: obs
                .rays()
                .into_iter()
                .map(|(l, r)| (*l.as_vec(), *r.as_vec()))
                .collect(),
            min_pairs,
        }
    }

    fn residuals(&self, state: &SolverState) -> Result<Residuals> {
        let n = self.rays.len();
        let mut values = Vec::with_capacity(n + 1);
        let mut usable = Vec::with_capacity(n + 1);
        values.push(anchor_residual(&state.right));
        usable.push(true);
        for (ql, qr) in &self.rays {
            match (
                rectified_row(&state.left, ql),
                rectified_row(&state.right, qr),
            ) {
                (Ok(vl), Ok(vr)) => {
                    values.push(vl - vr);
                    usable.push(true);
                }
                _ => {
                    values.push(0.0);
                    usable.push(false);
                }
            }
        }
        let res = Residuals { values, usable };
        let count = res.usable_pairs();
        if count < self.min_pairs {
            return Err(CalibError::TooFewPairs {
                usable: count,
                required: self.min_pairs,
            });
        }
        Ok(res)
    }

    fn jacobian_row(&self, state: &SolverState, index: usize) -> Result<JacobianRow> {
        if index == 0 {
            return Ok(anchor_jacobian(&state.right));
        }
        let (ql, qr) = self.rays.get(index - 1).ok_or_else(|| {
            CalibError::InvalidInput(format!("residual index {index} out of range"))
        })?;
        let jl = ratio_jacobian(&state.left, ql)?;
        let jr = ratio_jacobian(&state.right, qr)?;
        let mut row = JacobianRow::zeros();
        row.fixed_rows_mut::<3>(0).copy_from(&jl);
        row.fixed_rows_mut::<3>(3).copy_from(&(-jr));
        Ok(row)
    }
}

fn anchor_residual(right: &RotationMatrix) -> f64 {
    right.matrix()[(1, 2)]
}

/// `∂e₀/∂δ_r = −i₂ᵀ[R_r·i₃]×`.
fn anchor_jacobian(right: &RotationMatrix) -> JacobianRow {
    let c = right.rotate(&Vec3::z());
    let d = -(hat(&c).row(1).transpose());
    JacobianRow::new(0.0, 0.0, 0.0, d.x, d.y, d.z)
}

/// Gradient of `(i₂ᵀRq)/(i₃ᵀRq)` under `R ← exp([δ]×)·R`, where
/// `∂(Rq)/∂δ = −[Rq]×`.
fn ratio_jacobian(r: &RotationMatrix, q: &Vec3) -> Result<Vec3> {
    let a = r.rotate(q);
    let depth = a.z;
    if depth < HORIZON_EPS {
        return Err(CalibError::PointAtHorizon { depth });
    }
    let skew = hat(&a);
    let d_num = skew.row(1).transpose();
    let d_den = skew.row(2).transpose();
    Ok((-depth * d_num + a.y * d_den) / (depth * depth))
}

/// `Σ wᵢ·eᵢ²` over the usable entries.
fn weighted_energy(res: &Residuals, weights: &[f64]) -> f64 {
    res.values
        .iter()
        .zip(&res.usable)
        .zip(weights)
        .filter(|((_, u), _)| **u)
        .map(|((e, _), w)| w * e * e)
        .sum()
}

/// Residual vector at `state`; see [`Residuals`].
pub fn residual_vector(
    state: &SolverState,
    obs: &CorrespondenceSet,
    min_pairs: usize,
) -> Result<Residuals> {
    Problem::new(obs, min_pairs).residuals(state)
}

/// Row `index` of the Jacobian, laid out as `[∂/∂δ_l | ∂/∂δ_r]`.
pub fn jacobian_row(
    state: &SolverState,
    index: usize,
    obs: &CorrespondenceSet,
) -> Result<JacobianRow> {
    Problem::new(obs, 0).jacobian_row(state, index)
}

/// Solves `(Σ wᵢ·Jᵢ·Jᵢᵀ + λI)·δ = −Σ wᵢ·Jᵢ·eᵢ` by Cholesky factorization.
pub fn lm_step(
    rows: &[JacobianRow],
    residuals: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<Increment> {
    damped_normal_solve(rows, residuals, weights, lambda)
}

pub(crate) fn damped_normal_solve<const D: usize>(
    rows: &[SVector<f64, D>],
    residuals: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<SVector<f64, D>> {
    if rows.len() != residuals.len() || rows.len() != weights.len() {
        return Err(CalibError::InvalidInput(
            "jacobian, residual and weight counts differ".into(),
        ));
    }
    let mut normal = SMatrix::<f64, D, D>::identity() * lambda;
    let mut rhs = SVector::<f64, D>::zeros();
    for ((j, e), w) in rows.iter().zip(residuals).zip(weights) {
        normal += (j * j.transpose()) * *w;
        rhs -= j * (w * e);
    }
    let chol = normal.cholesky().ok_or(CalibError::NumericalFailure)?;
    let delta = chol.solve(&rhs);
    if !delta.iter().all(|v| v.is_finite()) {
        return Err(CalibError::NumericalFailure);
    }
    Ok(delta)
}

/// Estimates the extrinsics of one stereo pair.
///
/// Without a prior the solve starts from the ideal rig (`θ_l = θ_r = 0`).
/// Running out of iterations or damping is reported through
/// `diagnostics.converged`, not as an error.
pub fn solve_single_pair(
    obs: &CorrespondenceSet,
    config: &SolverConfig,
    init: Option<&Extrinsics>,
) -> Result<PairEstimate> {
    solve_single_pair_traced(obs, config, init, &mut Vec::new())
}

/// As [`solve_single_pair`], appending one record per trial step to `trace`.
pub fn solve_single_pair_traced(
    obs: &CorrespondenceSet,
    config: &SolverConfig,
    init: Option<&Extrinsics>,
    trace: &mut Vec<IterationRecord>,
) -> Result<PairEstimate> {
    config.validate()?;
    let start = match init {
        Some(ext) => SolverState::from_rect(&init_from_prior(ext)?),
        None => SolverState::identity(),
    };
    let (state, diagnostics) = minimize(obs, config, start, trace)?;
    Ok(PairEstimate::from_extrinsics(
        &extract_extrinsics(&state.rect()),
        diagnostics,
    ))
}

/// Runs the LM loop from `start` and returns the final rectifying state.
pub fn minimize(
    obs: &CorrespondenceSet,
    config: &SolverConfig,
    start: SolverState,
    trace: &mut Vec<IterationRecord>,
) -> Result<(SolverState, SolveDiagnostics)> {
    let problem = Problem::new(obs, config.min_pairs);
    let mut state = start;
    let mut res = problem.residuals(&state)?;
    let mut lambda = config.lambda_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut step_norm = f64::INFINITY;

    while iterations < config.max_iterations {
        iterations += 1;
        let weights: Vec<f64> = res
            .values
            .iter()
            .enumerate()
            .map(|(i, e)| if i == 0 { 1.0 } else { config.weight(*e) })
            .collect();
        let energy = weighted_energy(&res, &weights);

        let mut rows = Vec::with_capacity(res.values.len());
        let mut used_e = Vec::with_capacity(res.values.len());
        let mut used_w = Vec::with_capacity(res.values.len());
        for (i, usable) in res.usable.iter().enumerate() {
            if *usable {
                rows.push(problem.jacobian_row(&state, i)?);
                used_e.push(res.values[i]);
                used_w.push(weights[i]);
            }
        }
        let delta = lm_step(&rows, &used_e, &used_w, lambda)?;
        step_norm = delta.norm();
        if step_norm < config.step_tol {
            converged = true;
            trace.push(IterationRecord {
                lambda,
                step_norm,
                energy,
                trial_energy: None,
                accepted: false,
            });
            break;
        }

        let trial = state.apply_increment(&delta);
        let trial_res = problem.residuals(&trial).ok().filter(|tr| {
            // A pair that was usable must stay usable for the energies to
            // be comparable.
            res.usable
                .iter()
                .zip(&tr.usable)
                .all(|(was, now)| !*was || *now)
        });
        let trial_energy = trial_res.as_ref().map(|tr| {
            let masked = Residuals {
                values: tr.values.clone(),
                usable: res.usable.clone(),
            };
            weighted_energy(&masked, &weights)
        });
        let accepted = matches!(trial_energy, Some(e) if e < energy);
        trace.push(IterationRecord {
            lambda,
            step_norm,
            energy,
            trial_energy,
            accepted,
        });

        if accepted {
            state = trial;
            res = trial_res.expect("accepted trial has residuals");
            lambda *= config.lambda_down;
        } else {
            lambda *= config.lambda_up;
            if lambda > config.lambda_max {
                log::debug!("damping exceeded {:e}, stopping", config.lambda_max);
                break;
            }
        }
    }

    let final_weights: Vec<f64> = res
        .values
        .iter()
        .enumerate()
        .map(|(i, e)| if i == 0 { 1.0 } else { config.weight(*e) })
        .collect();
    let diagnostics = SolveDiagnostics {
        iterations,
        final_energy: weighted_energy(&res, &final_weights),
        final_step_norm: step_norm,
        converged,
        dropped_pairs: res.dropped_pairs(),
    };
    Ok((state, diagnostics))
}

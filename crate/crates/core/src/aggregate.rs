//! Fusion of per-pair estimates into one rig calibration.
//!
//! Translation directions and rotation axes are averaged on the unit sphere:
//! the unit vector maximizing the summed cosine similarity `Σ vₖᵀ·v*` is the
//! normalized sum. The rotation angle is the median of the per-pair angles.

use nalgebra::SymmetricEigen;

use crate::error::{CalibError, Result};
use crate::so3::{axis_angle, exp_so3, Mat3, RotationMatrix, RotationVector, UnitVec3, Vec3};
use crate::solver::PairEstimate;

/// Sums shorter than this have no usable direction.
const MIN_SUM_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEstimate {
    pub rotation: RotationMatrix,
    pub translation: UnitVec3,
    pub theta: RotationVector,
    pub axis: UnitVec3,
    pub angle: f64,
    pub contributing_pairs: usize,
    /// No estimate had a usable rotation axis; the rotation is identity.
    pub no_valid_axes: bool,
}

/// Normalized sum of unit vectors.
pub fn spherical_mean(vectors: &[UnitVec3]) -> Result<UnitVec3> {
    if vectors.is_empty() {
        return Err(CalibError::InvalidInput(
            "spherical mean of an empty set".into(),
        ));
    }
    let sum: Vec3 = vectors.iter().map(|v| v.as_vec()).sum();
    let norm = sum.norm();
    if norm <= MIN_SUM_NORM {
        return Err(CalibError::DegenerateSum { norm });
    }
    Ok(UnitVec3::new_unchecked(sum / norm))
}

/// Sign-invariant reference direction of a set of unit vectors: the dominant
/// eigenvector of `Σ vₖ·vₖᵀ`, oriented towards the majority of the vectors
/// (largest-magnitude component positive on an exact tie). Independent of the
/// order of the input.
fn reference_direction<'a>(vectors: impl Iterator<Item = &'a UnitVec3> + Clone) -> Option<Vec3> {
    let scatter: Mat3 = vectors
        .clone()
        .map(|v| v.as_vec() * v.as_vec().transpose())
        .sum();
    if scatter.amax() == 0.0 {
        return None;
    }
    let eig = SymmetricEigen::new(scatter);
    let mut dir: Vec3 = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let vote: f64 = vectors.map(|v| v.as_vec().dot(&dir)).sum();
    if vote < 0.0 || (vote == 0.0 && dir[dir.iamax()] < 0.0) {
        dir = -dir;
    }
    Some(dir)
}

/// Brings translations and rotation axes into a common hemisphere.
///
/// Translations pointing away from the reference are negated. An axis is
/// negated together with its angle (`θ = angle·axis` is unchanged); for
/// angles above π/2 the representative `2π − s` is used instead of `−s`, so
/// that angles near π stay clustered. Degenerate axes are left untouched.
pub fn canonicalize_signs(estimates: &[PairEstimate]) -> Vec<PairEstimate> {
    let t_ref = reference_direction(estimates.iter().map(|e| &e.translation));
    let v_ref = reference_direction(
        estimates
            .iter()
            .filter(|e| !e.axis_degenerate)
            .map(|e| &e.axis),
    );
    estimates
        .iter()
        .map(|e| {
            let mut out = e.clone();
            if let Some(r) = &t_ref {
                if e.translation.as_vec().dot(r) < 0.0 {
                    out.translation = -e.translation;
                }
            }
            if let (Some(r), false) = (&v_ref, e.axis_degenerate) {
                if e.axis.as_vec().dot(r) < 0.0 {
                    out.axis = -e.axis;
                    out.angle = if e.angle <= std::f64::consts::FRAC_PI_2 {
                        -e.angle
                    } else {
                        2.0 * std::f64::consts::PI - e.angle
                    };
                }
            }
            out
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fuses per-pair estimates into `(R*, t*)`.
pub fn aggregate(estimates: &[PairEstimate]) -> Result<GlobalEstimate> {
    if estimates.is_empty() {
        return Err(CalibError::InvalidInput("nothing to aggregate".into()));
    }
    let canon = canonicalize_signs(estimates);
    let translations: Vec<UnitVec3> = canon.iter().map(|e| e.translation).collect();
    let translation = spherical_mean(&translations)?;

    let axes: Vec<UnitVec3> = canon
        .iter()
        .filter(|e| !e.axis_degenerate)
        .map(|e| e.axis)
        .collect();
    if axes.is_empty() {
        return Ok(GlobalEstimate {
            rotation: RotationMatrix::identity(),
            translation,
            theta: RotationVector::zero(),
            axis: UnitVec3::z(),
            angle: 0.0,
            contributing_pairs: estimates.len(),
            no_valid_axes: true,
        });
    }
    let mean_axis = spherical_mean(&axes)?;
    let mut angles: Vec<f64> = canon.iter().map(|e| e.angle).collect();
    let angle = median(&mut angles);

    let rotation = exp_so3(&RotationVector::from_axis_angle(&mean_axis, angle));
    let aa = axis_angle(&rotation);
    Ok(GlobalEstimate {
        rotation,
        translation,
        theta: aa.rotation_vector(),
        axis: aa.axis,
        angle: aa.angle,
        contributing_pairs: estimates.len(),
        no_valid_axes: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rectification::Extrinsics;
    use crate::so3::log_so3;
    use crate::solver::SolveDiagnostics;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag() -> SolveDiagnostics {
        SolveDiagnostics {
            iterations: 1,
            final_energy: 0.0,
            final_step_norm: 0.0,
            converged: true,
            dropped_pairs: 0,
        }
    }

    fn estimate(theta: Vec3, t: Vec3) -> PairEstimate {
        let ext = Extrinsics::new(
            exp_so3(&RotationVector::new(theta)),
            UnitVec3::normalize(t).unwrap(),
        );
        PairEstimate::from_extrinsics(&ext, diag())
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> UnitVec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return UnitVec3::normalize(v).unwrap();
            }
        }
    }

    #[test]
    fn mean_of_singleton() {
        let m = spherical_mean(&[UnitVec3::x()]).unwrap();
        assert_eq!(m, UnitVec3::x());
    }

    #[test]
    fn mean_of_two_axes() {
        let m = spherical_mean(&[UnitVec3::x(), UnitVec3::y()]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(*m.as_vec(), Vec3::new(h, h, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn mean_of_antipodes_is_degenerate() {
        let err = spherical_mean(&[UnitVec3::x(), -UnitVec3::x()]).unwrap_err();
        assert!(matches!(err, CalibError::DegenerateSum { .. }));
    }

    #[test]
    fn mean_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let centre = random_unit(&mut rng);
        let vs: Vec<UnitVec3> = (0..500)
            .map(|_| {
                UnitVec3::normalize(centre.as_vec() + random_unit(&mut rng).as_vec() * 0.8).unwrap()
            })
            .collect();
        let objective = |c: &Vec3| vs.iter().map(|v| v.as_vec().dot(c)).sum::<f64>();
        let best = objective(spherical_mean(&vs).unwrap().as_vec());
        for _ in 0..10_000 {
            assert!(objective(random_unit(&mut rng).as_vec()) <= best + 1e-9);
        }
    }

    #[test]
    fn aligned_estimates_are_untouched() {
        let ests: Vec<_> = (0..5)
            .map(|i| {
                estimate(
                    Vec3::new(0.1, 0.02 * i as f64, 0.0),
                    Vec3::new(-1.0, 0.01 * i as f64, 0.02),
                )
            })
            .collect();
        assert_eq!(canonicalize_signs(&ests), ests);
    }

    #[test]
    fn negated_translation_is_restored() {
        let mut ests: Vec<_> = (0..5)
            .map(|i| {
                estimate(
                    Vec3::new(0.1, 0.0, 0.01 * i as f64),
                    Vec3::new(-1.0, 0.0, 0.01 * i as f64),
                )
            })
            .collect();
        let original = ests[2].translation;
        ests[2].translation = -original;
        let canon = canonicalize_signs(&ests);
        assert_eq!(canon[2].translation, original);
    }

    #[test]
    fn flipped_axes_keep_the_same_rotation() {
        let mut ests = vec![
            estimate(Vec3::new(0.0, 0.0, 0.2), Vec3::new(-1.0, 0.0, 0.0)),
            estimate(Vec3::new(0.0, 0.01, 0.21), Vec3::new(-1.0, 0.0, 0.0)),
            estimate(Vec3::new(0.0, 0.0, 3.1), Vec3::new(-1.0, 0.0, 0.0)),
        ];
        // Represent the second one with the opposite axis.
        ests[1].axis = -ests[1].axis;
        ests[1].angle = -ests[1].angle;
        let canon = canonicalize_signs(&ests);
        for (c, e) in canon.iter().zip(&ests) {
            let rot = exp_so3(&RotationVector::from_axis_angle(&c.axis, c.angle));
            assert_relative_eq!(*rot.matrix(), *e.rotation.matrix(), epsilon = 1e-12);
            assert!(c.axis.as_vec().z > 0.0);
        }
    }

    #[test]
    fn random_sign_flips_do_not_change_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ests: Vec<PairEstimate> = (0..40)
            .map(|_| {
                let t = Vec3::new(-1.0, 0.0, 0.0) + random_unit(&mut rng).as_vec() * 0.05;
                estimate(Vec3::new(0.05, 0.08, 0.0), t)
            })
            .collect();
        let reference =
            spherical_mean(&ests.iter().map(|e| e.translation).collect::<Vec<_>>()).unwrap();
        let mut flipped = ests.clone();
        for e in flipped.iter_mut() {
            if rng.random_bool(0.3) {
                e.translation = -e.translation;
            }
        }
        let canon = canonicalize_signs(&flipped);
        let mean =
            spherical_mean(&canon.iter().map(|e| e.translation).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(*mean.as_vec(), *reference.as_vec(), epsilon = 1e-12);
    }

    #[test]
    fn single_estimate_is_returned() {
        let e = estimate(Vec3::new(0.03, -0.04, 0.05), Vec3::new(-1.0, 0.1, 0.05));
        let g = aggregate(std::slice::from_ref(&e)).unwrap();
        assert_relative_eq!(*g.rotation.matrix(), *e.rotation.matrix(), epsilon = 1e-12);
        assert_relative_eq!(
            *g.translation.as_vec(),
            *e.translation.as_vec(),
            epsilon = 1e-12
        );
        assert_relative_eq!(*g.theta.as_vec(), *e.theta.as_vec(), epsilon = 1e-12);
        assert_eq!(g.contributing_pairs, 1);
    }

    #[test]
    fn identical_estimates_are_reproduced() {
        let e = estimate(Vec3::new(-0.2, 0.1, 0.3), Vec3::new(-1.0, 0.0, 0.1));
        let g = aggregate(&vec![e.clone(); 7]).unwrap();
        assert_relative_eq!(*g.rotation.matrix(), *e.rotation.matrix(), epsilon = 1e-12);
        assert_eq!(g.angle, e.angle);
        assert!(!g.no_valid_axes);
    }

    #[test]
    fn all_degenerate_axes_give_identity() {
        let e = estimate(Vec3::zeros(), Vec3::new(-1.0, 0.0, 0.0));
        let g = aggregate(&[e.clone(), e]).unwrap();
        assert!(g.no_valid_axes);
        assert_eq!(g.rotation, RotationMatrix::identity());
    }

    #[test]
    fn order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ests: Vec<PairEstimate> = (0..25)
            .map(|_| {
                let th = Vec3::new(0.0, 0.09, 0.0) + random_unit(&mut rng).as_vec() * 0.01;
                let t = Vec3::new(-1.0, 0.0, 0.0) + random_unit(&mut rng).as_vec() * 0.02;
                estimate(th, t)
            })
            .collect();
        let a = aggregate(&ests).unwrap();
        ests.reverse();
        ests.swap(3, 17);
        let b = aggregate(&ests).unwrap();
        assert_relative_eq!(*a.rotation.matrix(), *b.rotation.matrix(), epsilon = 1e-12);
        assert_relative_eq!(
            *a.translation.as_vec(),
            *b.translation.as_vec(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn global_fields_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ests: Vec<PairEstimate> = (0..30)
            .map(|_| {
                let th = Vec3::new(0.3, -0.2, 0.1) + random_unit(&mut rng).as_vec() * 0.02;
                estimate(th, Vec3::new(-1.0, 0.05, 0.0))
            })
            .collect();
        let g = aggregate(&ests).unwrap();
        assert_relative_eq!(
            *exp_so3(&g.theta).matrix(),
            *g.rotation.matrix(),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            *g.theta.as_vec(),
            g.axis.as_vec() * g.angle,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            *log_so3(&g.rotation).as_vec(),
            *g.theta.as_vec(),
            epsilon = 1e-10
        );
    }
}

use approx::assert_relative_eq;
use proptest::prelude::*;
use stereocal::so3::{orthogonality_defect, Vec3};
use stereocal::{
    exp_so3, extract_extrinsics, init_from_prior, log_so3, Extrinsics, RotationVector, UnitVec3,
};

fn rotation_vector(max_angle: f64) -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..max_angle)
        .prop_filter_map("axis must be nonzero", |(x, y, z, s)| {
            UnitVec3::normalize(Vec3::new(x, y, z)).map(|a| a.into_inner() * s)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn log_inverts_exp(v in rotation_vector(std::f64::consts::PI - 0.05)) {
        let r = exp_so3(&RotationVector::new(v));
        prop_assert!(orthogonality_defect(r.matrix()) < 1e-12);
        let back = log_so3(&r);
        prop_assert!((back.as_vec() - v).norm() < 1e-9);
    }

    #[test]
    fn extraction_inverts_the_prior(
        v in rotation_vector(1.0),
        (tx, ty, tz) in (-1.0..-0.2f64, -0.5..0.5f64, -0.5..0.5f64),
    ) {
        let t = UnitVec3::normalize(Vec3::new(tx, ty, tz)).unwrap();
        let ext = Extrinsics::new(exp_so3(&RotationVector::new(v)), t);
        let back = extract_extrinsics(&init_from_prior(&ext).unwrap());
        prop_assert!((back.rotation.matrix() - ext.rotation.matrix()).abs().max() < 1e-12);
        prop_assert!((back.translation.as_vec() - t.as_vec()).abs().max() < 1e-12);
    }
}

#[test]
fn near_pi_rotations_round_trip_up_to_sign() {
    let axis = UnitVec3::normalize(Vec3::new(0.3, -0.4, 0.5)).unwrap();
    for s in [std::f64::consts::PI - 1e-4, std::f64::consts::PI - 1e-6] {
        let r = exp_so3(&RotationVector::from_axis_angle(&axis, s));
        let back = exp_so3(&log_so3(&r));
        assert_relative_eq!(*back.matrix(), *r.matrix(), epsilon = 1e-9);
    }
}

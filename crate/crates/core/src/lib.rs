//! Online extrinsic self-calibration of stereo cameras.
//!
//! A stereo pair is calibrated by estimating the two rotations that rectify
//! it: once both image planes share a common plane parallel to the baseline,
//! corresponding points lie on the same image row. The relative rotation and
//! the baseline direction follow from the rectifying rotations in closed
//! form. Estimates from many image pairs are fused by averaging directions on
//! the unit sphere.
//!
//! * [`so3`]: rotation kernel (exp/log maps, axis-angle).
//! * [`rectification`]: camera model, rectifying rotations and homographies,
//!   vertical-disparity residual.
//! * [`solver`]: Levenberg-Marquardt over the rectifying rotations with
//!   Huber weighting.
//! * [`aggregate`]: multi-pair fusion.
//! * [`baseline`]: epipolar-constraint estimator used for comparison.
//! * [`metrics`]: angular error and spread metrics.
//! * [`synth`]: synthetic scenes with known ground truth.

pub mod aggregate;
pub mod baseline;
pub mod error;
pub mod metrics;
pub mod rectification;
pub mod so3;
pub mod solver;
pub mod synth;

pub use aggregate::{aggregate, canonicalize_signs, spherical_mean, GlobalEstimate};
pub use baseline::{epipolar_objective, solve_epipolar, EssentialMatrix};
pub use error::{CalibError, Result};
pub use metrics::{evaluate, MetricsReport, ReferenceExtrinsics};
pub use rectification::{
    back_project, build_rr_from_t, extract_extrinsics, init_from_prior, rectifying_homographies,
    vertical_residual, CorrespondencePair, CorrespondenceSet, Extrinsics, Homography, Intrinsics,
    PixelPoint, RectifyingPair,
};
pub use so3::{
    axis_angle, exp_so3, hat, log_so3, AxisAngle, RotationMatrix, RotationVector, UnitVec3,
};
pub use solver::{solve_single_pair, PairEstimate, SolveDiagnostics, SolverConfig};
pub use synth::{generate, perturb_viewpoint, run_protocol, GroundTruth, SceneConfig, Viewpoint};

//! Synthetic stereo scenes with known extrinsics.
//!
//! Points are drawn in the left camera frustum, mapped into the right camera
//! with the true extrinsics, and projected through both pinhole models. Pixel
//! noise and outliers are injected afterwards, so the clean geometry for a
//! given seed does not depend on the noise settings.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::rectification::{
    init_from_prior, CorrespondencePair, CorrespondenceSet, Extrinsics, Intrinsics, PixelPoint,
    RectifyingPair,
};
use crate::so3::{exp_so3, RotationVector, UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_points: usize,
    /// Depth range in the left camera frame.
    pub depth_range: (f64, f64),
    /// Image width and height in pixels.
    pub image_size: (f64, f64),
    pub intrinsics_left: Intrinsics,
    pub intrinsics_right: Intrinsics,
    /// Standard deviation of the Gaussian noise added to every pixel
    /// coordinate in both images.
    pub pixel_noise_sigma: f64,
    /// Fraction of pairs whose right pixel is replaced by a uniform random
    /// in-image location.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let k = Intrinsics {
            fx: 1200.0,
            fy: 1200.0,
            cx: 960.0,
            cy: 600.0,
            skew: 0.0,
        };
        Self {
            n_points: 50,
            depth_range: (2.0, 20.0),
            image_size: (1920.0, 1200.0),
            intrinsics_left: k,
            intrinsics_right: k,
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (near, far) = self.depth_range;
        let (w, h) = self.image_size;
        let ok = self.n_points > 0
            && near > 0.0
            && far >= near
            && far.is_finite()
            && w > 0.0
            && h > 0.0
            && self.pixel_noise_sigma >= 0.0
            && self.pixel_noise_sigma.is_finite()
            && (0.0..1.0).contains(&self.outlier_fraction);
        if !ok {
            return Err(CalibError::InvalidInput(format!(
                "invalid scene config: {self:?}"
            )));
        }
        self.intrinsics_left.validate()?;
        self.intrinsics_right.validate()
    }

    fn in_image(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.u < self.image_size.0 && p.v >= 0.0 && p.v < self.image_size.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub extrinsics: Extrinsics,
    pub rectifying: RectifyingPair,
    /// Scene points in the left camera frame.
    pub points: Vec<Vec3>,
}

/// Camera placements used to perturb a calibrated rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Viewpoint {
    Middle,
    Top,
    Bottom,
    Left,
    Right,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 5] = [
        Viewpoint::Middle,
        Viewpoint::Top,
        Viewpoint::Bottom,
        Viewpoint::Left,
        Viewpoint::Right,
    ];

    /// Signed rotation axis: pitch about x for top/bottom, yaw about y for
    /// left/right.
    fn axis(self) -> Option<Vec3> {
        match self {
            Viewpoint::Middle => None,
            Viewpoint::Top => Some(Vec3::x()),
            Viewpoint::Bottom => Some(-Vec3::x()),
            Viewpoint::Left => Some(Vec3::y()),
            Viewpoint::Right => Some(-Vec3::y()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Viewpoint::Middle => "middle",
            Viewpoint::Top => "top",
            Viewpoint::Bottom => "bottom",
            Viewpoint::Left => "left",
            Viewpoint::Right => "right",
        }
    }
}

impl fmt::Display for Viewpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Viewpoint {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        Viewpoint::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CalibError::InvalidInput(format!("unknown viewpoint {s:?}")))
    }
}

/// Rotates the rig by `angle` about the viewpoint's axis: both the relative
/// rotation and the translation direction are left-multiplied by the
/// perturbation.
pub fn perturb_viewpoint(
    base: &Extrinsics,
    direction: Viewpoint,
    angle: f64,
) -> Result<Extrinsics> {
    if !(0.0..=std::f64::consts::FRAC_PI_4).contains(&angle) {
        return Err(CalibError::InvalidInput(format!(
            "perturbation angle {angle} outside [0, π/4]"
        )));
    }
    let Some(axis) = direction.axis() else {
        return Ok(*base);
    };
    let q = exp_so3(&RotationVector::new(axis * angle));
    let translation = UnitVec3::normalize(q.rotate(base.translation.as_vec()))
        .expect("rotation preserves a unit vector");
    Ok(Extrinsics::new(q * base.rotation, translation))
}

/// Generates one scene from `config.seed`.
pub fn generate(
    config: &SceneConfig,
    truth: &Extrinsics,
) -> Result<(GroundTruth, CorrespondenceSet)> {
    generate_stream(config, truth, 0)
}

/// Generates scene number `stream` of the family seeded by `config.seed`.
/// Every stream is an independent random sequence.
pub fn generate_stream(
    config: &SceneConfig,
    truth: &Extrinsics,
    stream: u64,
) -> Result<(GroundTruth, CorrespondenceSet)> {
    config.validate()?;
    let rectifying = init_from_prior(truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let kl = &config.intrinsics_left;
    let kr = &config.intrinsics_right;
    let (near, far) = config.depth_range;
    let (width, height) = config.image_size;

    let mut points = Vec::with_capacity(config.n_points);
    let mut pairs = Vec::with_capacity(config.n_points);
    let max_attempts = 100 * config.n_points;
    let mut attempts = 0;
    while points.len() < config.n_points && attempts < max_attempts {
        attempts += 1;
        let pixel = PixelPoint::new(rng.random_range(0.0..width), rng.random_range(0.0..height));
        let depth = if far > near {
            rng.random_range(near..far)
        } else {
            near
        };
        let ray = kl.inverse_matrix() * Vec3::new(pixel.u, pixel.v, 1.0);
        let p_left = ray * depth;
        let p_right = truth.transform(&p_left);
        if p_right.z <= 0.0 {
            continue;
        }
        let right = kr.project(&p_right);
        if !config.in_image(&right) {
            continue;
        }
        points.push(p_left);
        pairs.push(CorrespondencePair::new(kl.project(&p_left), right));
    }
    if points.len() < config.n_points {
        return Err(CalibError::InsufficientVisibility {
            found: points.len(),
            requested: config.n_points,
        });
    }

    if config.pixel_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.pixel_noise_sigma)
            .map_err(|e| CalibError::InvalidInput(e.to_string()))?;
        for pair in &mut pairs {
            pair.left.u += normal.sample(&mut rng);
            pair.left.v += normal.sample(&mut rng);
            pair.right.u += normal.sample(&mut rng);
            pair.right.v += normal.sample(&mut rng);
        }
    }

    let n_outliers = (config.outlier_fraction * config.n_points as f64).round() as usize;
    if n_outliers > 0 {
        let picks = rand::seq::index::sample(&mut rng, config.n_points, n_outliers);
        for i in picks.iter() {
            pairs[i].right =
                PixelPoint::new(rng.random_range(0.0..width), rng.random_range(0.0..height));
        }
    }

    let obs = CorrespondenceSet::new(pairs, *kl, *kr)?;
    Ok((
        GroundTruth {
            extrinsics: *truth,
            rectifying,
            points,
        },
        obs,
    ))
}

/// `m` scenes sharing the true extrinsics, each with its own points and
/// noise. The returned ground truth carries the points of the first scene.
pub fn run_protocol(
    config: &SceneConfig,
    base: &Extrinsics,
    m: usize,
) -> Result<(Vec<CorrespondenceSet>, GroundTruth)> {
    if m == 0 {
        return Err(CalibError::InvalidInput(
            "protocol needs at least one scene".into(),
        ));
    }
    let mut sets = Vec::with_capacity(m);
    let mut first = None;
    for k in 0..m {
        let (truth, obs) = generate_stream(config, base, k as u64)?;
        if first.is_none() {
            first = Some(truth);
        }
        sets.push(obs);
    }
    Ok((sets, first.expect("m >= 1")))
}

#![allow(dead_code)]

use stereocal::{
    generate, perturb_viewpoint, CorrespondenceSet, Extrinsics, SceneConfig, Viewpoint,
};

pub const FIVE_DEG: f64 = 0.087_266_462_599_716_48;

/// Rig perturbed towards one of the five viewpoints, chosen by `k`.
pub fn viewpoint_truth(k: u64) -> Extrinsics {
    let view = Viewpoint::ALL[(k % 5) as usize];
    perturb_viewpoint(&Extrinsics::rectified_rig(), view, FIVE_DEG).unwrap()
}

pub fn scene(seed: u64, sigma: f64, outliers: f64, truth: &Extrinsics) -> CorrespondenceSet {
    let cfg = SceneConfig {
        seed,
        pixel_noise_sigma: sigma,
        outlier_fraction: outliers,
        ..SceneConfig::default()
    };
    generate(&cfg, truth).unwrap().1
}

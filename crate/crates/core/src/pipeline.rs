//! End-to-end helpers shared by the command line and the acceptance run:
//! scan pose placement, random frame poses, frame rendering, and the full
//! scene-to-splits dataset build.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::{generate_scene, lidar_subsample, PointCloud, SceneConfig};
use crate::config::Config;
use crate::dataset::{augment_dataset, split_dataset, PairSample};
use crate::error::Result;
use crate::img::IntensityImage;
use crate::projector::{camera_pose, render_intensity, CameraIntrinsics, ClipPlanes};
use crate::se3::Pose;

/// Map scan origin: scene center at typical sensor height.
pub fn scan_pose(cfg: &SceneConfig) -> Pose {
    Pose::from_parts(
        nalgebra::Matrix3::identity(),
        Vector3::new(cfg.extent.x / 2.0, cfg.extent.y / 2.0, 1.5),
    )
}

/// Camera poses along a vehicle-like survey path: two parallel aisles inset
/// from the walls, cameras facing the room interior, with small lateral and
/// heading jitter. Height is fixed at 1.2 m. Sampling positions on a shared
/// trajectory (rather than uniformly over the interior) mirrors how
/// mapping/localization data is collected and keeps held-out frames visually
/// between seen ones.
pub fn sample_frame_poses(cfg: &SceneConfig, count: usize, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let margin = (cfg.extent.x.min(cfg.extent.y) * 0.3).min(3.0);
    let (x0, x1) = (margin, cfg.extent.x - margin);
    let (y0, y1) = (margin, cfg.extent.y - margin);
    let lx = x1 - x0;
    (0..count)
        .map(|_| {
            // Two parallel aisles along the room's long axis, walked in
            // opposite directions, like the up and down passes of a survey.
            let u = rng.random_range(0.0..2.0 * lx);
            let (base, tangent) = if u < lx {
                (Vector3::new(x0 + u, y0, 0.0), 0.0)
            } else {
                (Vector3::new(x1 - (u - lx), y1, 0.0), std::f64::consts::PI)
            };
            let lateral = rng.random_range(-0.02..0.02);
            // Face the room interior (90 deg left of the walking direction):
            // nearby pillars and the far wall are then both in view, which
            // gives depth parallax for disambiguating translation.
            let yaw = tangent + std::f64::consts::FRAC_PI_2 + rng.random_range(-0.02..0.02);
            let pos = base + Vector3::new(-lateral * tangent.sin(), lateral * tangent.cos(), 0.0);
            camera_pose(Vector3::new(pos.x, pos.y, 1.2), 0.0, 0.0, yaw)
        })
        .collect()
}

pub fn render_frames(
    dense: &PointCloud,
    poses: &[Pose],
    k: &CameraIntrinsics,
    g: &ClipPlanes,
    splat_radius: usize,
) -> Result<Vec<(Pose, IntensityImage)>> {
    poses
        .iter()
        .map(|p| Ok((*p, render_intensity(dense, p, k, g, splat_radius)?)))
        .collect()
}

pub struct BuiltDataset {
    pub train: Vec<PairSample>,
    pub val: Vec<PairSample>,
    pub test: Vec<PairSample>,
    pub frame_poses: Vec<Pose>,
    pub dense: PointCloud,
    pub sparse: PointCloud,
    pub skipped_renders: usize,
}

/// Generates the scene, scans it with the simulated LiDAR, renders frames,
/// augments, and splits. All randomness branches off `seed` so the result is
/// bitwise reproducible.
pub fn build_dataset(
    cfg: &Config,
    seed: u64,
    frame_count: usize,
    fractions: (f64, f64, f64),
) -> Result<BuiltDataset> {
    let scene_cfg = cfg.scene_config(seed)?;
    let k = cfg.intrinsics()?;
    let g = cfg.clip_planes()?;
    let bounds = cfg.perturb_bounds()?;
    let azimuth = cfg.get_f64("scene.azimuth_step_deg", 1.0)?.to_radians();
    let splat_radius = cfg.get_usize("render.splat_radius", 1)?;
    let inpaint_iters = cfg.get_usize("render.inpaint_iters", 3)?;

    let dense = generate_scene(&scene_cfg)?;
    let sparse = lidar_subsample(&dense, &scan_pose(&scene_cfg), scene_cfg.beam_count, azimuth);

    let mut pose_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let frame_poses = sample_frame_poses(&scene_cfg, frame_count, &mut pose_rng);
    let frames = render_frames(&dense, &frame_poses, &k, &g, splat_radius)?;

    let mut aug_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let (samples, skipped_renders) =
        augment_dataset(&frames, &sparse, &bounds, &k, &g, inpaint_iters, &mut aug_rng);
    let (train, val, test) = split_dataset(samples, fractions, seed.wrapping_add(3))?;
    Ok(BuiltDataset {
        train,
        val,
        test,
        frame_poses,
        dense,
        sparse,
        skipped_renders,
    })
}

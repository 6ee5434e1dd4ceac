//! Point-cloud storage and IO, synthetic garage scene generation, and
//! beam-count subsampling that mimics the sparsity of a spinning LiDAR scan.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::se3::{invert, Pose};

/// Vertical field of view of the simulated scanner, +-15 degrees like a
/// 16-beam unit.
pub const LIDAR_ELEVATION_FOV: f64 = 15.0 * PI / 180.0;

/// A set of 3D map points with optional per-point intensity in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub intensity: Option<Vec<f64>>,
}

/// Parameters of the synthetic garage scene: a box with floor, ceiling,
/// perimeter walls, and a lattice of cylindrical pillars.
#[derive(Debug, Clone, Copy)]
pub struct SceneConfig {
    /// Box dimensions in meters; the scene spans [0, extent] on each axis.
    pub extent: Vector3<f64>,
    /// Center-to-center pillar spacing in meters.
    pub pillar_spacing: f64,
    /// Pillar radius in meters.
    pub pillar_radius: f64,
    /// Inward jitter depth applied to wall points.
    pub wall_thickness: f64,
    /// Dense sampling density in points per square meter.
    pub point_density_dense: f64,
    /// Beam count used when this scene is subsampled.
    pub beam_count: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            extent: Vector3::new(20.0, 10.0, 3.0),
            pillar_spacing: 5.0,
            pillar_radius: 0.3,
            wall_thickness: 0.05,
            point_density_dense: 50.0,
            beam_count: 16,
            seed: 0,
        }
    }
}

impl PointCloud {
    pub fn empty() -> Self {
        PointCloud {
            points: Vec::new(),
            intensity: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pillar lattice centers for a config: multiples of the spacing that keep a
/// full spacing away from the perimeter.
pub fn pillar_centers(cfg: &SceneConfig) -> Vec<(f64, f64)> {
    let count = |extent: f64| ((extent / cfg.pillar_spacing).floor() as isize - 1).max(0) as usize;
    let mut centers = Vec::new();
    for i in 0..count(cfg.extent.x) {
        for j in 0..count(cfg.extent.y) {
            centers.push((
                cfg.pillar_spacing * (i + 1) as f64,
                cfg.pillar_spacing * (j + 1) as f64,
            ));
        }
    }
    centers
}

/// Per-surface (area, base intensity) terms; point counts are
/// `round(area * density)` per surface.
pub fn surface_areas(cfg: &SceneConfig) -> Vec<(f64, f64)> {
    let e = cfg.extent;
    let mut surfaces = vec![
        (e.x * e.y, 0.3), // floor
        (e.x * e.y, 0.3), // ceiling
        (e.x * e.z, 0.8), // wall y=0
        (e.x * e.z, 0.8), // wall y=ey
        (e.y * e.z, 0.8), // wall x=0
        (e.y * e.z, 0.8), // wall x=ex
    ];
    let lateral = 2.0 * PI * cfg.pillar_radius * e.z;
    for _ in pillar_centers(cfg) {
        surfaces.push((lateral, 0.5));
    }
    surfaces
}

/// Seeded hash of the 0.5 m texture cell containing `p`, mapped to
/// [-0.15, 0.15]. Points on the same surface panel share the offset, so
/// rendered intensity carries spatial structure (markings, stains) instead
/// of per-point noise that averages away under splatting.
fn panel_offset(p: &Vector3<f64>, seed: u64) -> f64 {
    const CELL: f64 = 0.5;
    let q = |v: f64| (v / CELL).floor() as i64 as u64;
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for k in [q(p.x), q(p.y), q(p.z)] {
        h ^= k.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h = h.rotate_left(31).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    }
    ((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.3
}

/// Samples the dense scene cloud. Deterministic under `cfg.seed`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let e = cfg.extent;
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    let d = cfg.point_density_dense;
    let seed = cfg.seed;

    let mut push = |p: Vector3<f64>, base: f64, rng: &mut ChaCha8Rng| {
        let v = base + panel_offset(&p, seed) + rng.random_range(-0.02..=0.02);
        points.push(p);
        intensity.push(v.clamp(0.0, 1.0));
    };

    let n_of = |area: f64| (area * d).round() as usize;

    // Floor and ceiling.
    for z in [0.0, e.z] {
        for _ in 0..n_of(e.x * e.y) {
            let p = Vector3::new(rng.random_range(0.0..e.x), rng.random_range(0.0..e.y), z);
            push(p, 0.3, &mut rng);
        }
    }
    // Perimeter walls, jittered inward by up to the wall thickness.
    let t = cfg.wall_thickness;
    for _ in 0..n_of(e.x * e.z) {
        let p = Vector3::new(
            rng.random_range(0.0..e.x),
            rng.random_range(0.0..t.min(e.y)),
            rng.random_range(0.0..e.z),
        );
        push(p, 0.8, &mut rng);
    }
    for _ in 0..n_of(e.x * e.z) {
        let p = Vector3::new(
            rng.random_range(0.0..e.x),
            e.y - rng.random_range(0.0..t.min(e.y)),
            rng.random_range(0.0..e.z),
        );
        push(p, 0.8, &mut rng);
    }
    for _ in 0..n_of(e.y * e.z) {
        let p = Vector3::new(
            rng.random_range(0.0..t.min(e.x)),
            rng.random_range(0.0..e.y),
            rng.random_range(0.0..e.z),
        );
        push(p, 0.8, &mut rng);
    }
    for _ in 0..n_of(e.y * e.z) {
        let p = Vector3::new(
            e.x - rng.random_range(0.0..t.min(e.x)),
            rng.random_range(0.0..e.y),
            rng.random_range(0.0..e.z),
        );
        push(p, 0.8, &mut rng);
    }
    // Pillar lateral surfaces.
    let lateral = 2.0 * PI * cfg.pillar_radius * e.z;
    for (cx, cy) in pillar_centers(cfg) {
        for _ in 0..n_of(lateral) {
            let theta = rng.random_range(0.0..2.0 * PI);
            let p = Vector3::new(
                cx + cfg.pillar_radius * theta.cos(),
                cy + cfg.pillar_radius * theta.sin(),
                rng.random_range(0.0..e.z),
            );
            push(p, 0.5, &mut rng);
        }
    }

    if points.len() < 1000 {
        return Err(CoreError::DensityTooLow(points.len()));
    }
    Ok(PointCloud {
        points,
        intensity: Some(intensity),
    })
}

/// Keeps the nearest point per (elevation beam, azimuth bin) cell as seen
/// from `sensor_pose`. Ties break toward the smaller point index. Points
/// outside the +-15 degree elevation field of view are dropped.
pub fn lidar_subsample(
    cloud: &PointCloud,
    sensor_pose: &Pose,
    beam_count: usize,
    azimuth_step: f64,
) -> PointCloud {
    assert!(beam_count >= 1);
    assert!(azimuth_step > 0.0);
    let to_sensor = invert(sensor_pose);
    let azimuth_bins = (2.0 * PI / azimuth_step).ceil().max(1.0) as usize;
    // cell -> (range, point index)
    let mut best: std::collections::HashMap<(usize, usize), (f64, usize)> =
        std::collections::HashMap::new();
    for (idx, p) in cloud.points.iter().enumerate() {
        let s = to_sensor.rotation * p + to_sensor.translation;
        let range = s.norm();
        if range == 0.0 {
            continue;
        }
        let horiz = (s.x * s.x + s.y * s.y).sqrt();
        let elev = s.z.atan2(horiz);
        if elev.abs() > LIDAR_ELEVATION_FOV {
            continue;
        }
        let beam = (((elev + LIDAR_ELEVATION_FOV) / (2.0 * LIDAR_ELEVATION_FOV))
            * beam_count as f64)
            .floor()
            .min(beam_count as f64 - 1.0) as usize;
        let az = s.y.atan2(s.x); // (-pi, pi]
        let azbin = (((az + PI) / azimuth_step).floor() as usize).min(azimuth_bins - 1);
        let cell = (beam, azbin);
        match best.get(&cell) {
            Some(&(r, _)) if r < range || (r == range) => {}
            _ => {
                best.insert(cell, (range, idx));
            }
        }
    }
    let mut keep: Vec<usize> = best.values().map(|&(_, i)| i).collect();
    keep.sort_unstable();
    PointCloud {
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
        intensity: cloud
            .intensity
            .as_ref()
            .map(|ints| keep.iter().map(|&i| ints[i]).collect()),
    }
}

/// ASCII cloud format: one point per line, `x y z [intensity]`.
pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(cloud.len() * 32);
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.intensity {
            Some(ints) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, ints[i])?,
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut intensity: Option<Vec<f64>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CoreError::Parse {
                line: lineno + 1,
                msg: format!("{e}"),
            })?;
        match vals.len() {
            3 | 4 => {}
            n => {
                return Err(CoreError::Parse {
                    line: lineno + 1,
                    msg: format!("expected 3 or 4 fields, got {n}"),
                })
            }
        }
        let has_intensity = vals.len() == 4;
        if points.is_empty() {
            intensity = has_intensity.then(Vec::new);
        } else if intensity.is_some() != has_intensity {
            return Err(CoreError::Parse {
                line: lineno + 1,
                msg: "mixed intensity presence".to_string(),
            });
        }
        points.push(Vector3::new(vals[0], vals[1], vals[2]));
        if let Some(ints) = intensity.as_mut() {
            ints.push(vals[3]);
        }
    }
    Ok(PointCloud { points, intensity })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SceneConfig {
        SceneConfig {
            extent: Vector3::new(20.0, 10.0, 3.0),
            point_density_dense: 50.0,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn point_count_matches_analytic_areas() {
        let cfg = small_cfg();
        let cloud = generate_scene(&cfg).unwrap();
        let expected: usize = surface_areas(&cfg)
            .iter()
            .map(|(a, _)| (a * cfg.point_density_dense).round() as usize)
            .sum();
        assert_eq!(cloud.len(), expected);
    }

    #[test]
    fn point_count_scales_with_density() {
        let cfg = small_cfg();
        let mut cfg4 = cfg;
        cfg4.point_density_dense *= 4.0;
        let n1 = generate_scene(&cfg).unwrap().len() as f64;
        let n4 = generate_scene(&cfg4).unwrap().len() as f64;
        assert!((n4 / n1 - 4.0).abs() < 0.04, "ratio {}", n4 / n1);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = small_cfg();
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn points_inside_extent() {
        let cfg = small_cfg();
        let cloud = generate_scene(&cfg).unwrap();
        for p in &cloud.points {
            assert!(p.x >= 0.0 && p.x <= cfg.extent.x);
            assert!(p.y >= 0.0 && p.y <= cfg.extent.y);
            assert!(p.z >= 0.0 && p.z <= cfg.extent.z);
        }
    }

    #[test]
    fn density_too_low_rejected() {
        let mut cfg = small_cfg();
        cfg.point_density_dense = 0.5;
        match generate_scene(&cfg) {
            Err(CoreError::DensityTooLow(_)) => {}
            other => panic!("expected DensityTooLow, got {other:?}"),
        }
    }

    fn scan_pose(cfg: &SceneConfig) -> Pose {
        Pose::from_parts(
            nalgebra::Matrix3::identity(),
            Vector3::new(cfg.extent.x / 2.0, cfg.extent.y / 2.0, 1.5),
        )
    }

    #[test]
    fn subsample_single_point() {
        let cloud = PointCloud {
            points: vec![Vector3::new(5.0, 0.0, 0.0)],
            intensity: None,
        };
        let out = lidar_subsample(&cloud, &Pose::identity(), 16, 0.01);
        assert_eq!(out.points, cloud.points);
    }

    #[test]
    fn subsample_fine_bins_keeps_visible_points() {
        // Bins finer than the angular spacing of a handful of points keep
        // everything inside the field of view.
        let cloud = PointCloud {
            points: vec![
                Vector3::new(5.0, 0.0, 0.0),
                Vector3::new(5.0, 1.0, 0.3),
                Vector3::new(4.0, -2.0, -0.5),
                Vector3::new(8.0, 3.0, 1.0),
            ],
            intensity: None,
        };
        let out = lidar_subsample(&cloud, &Pose::identity(), 4096, 1e-4);
        assert_eq!(out.points.len(), cloud.points.len());
    }

    #[test]
    fn subsample_is_sparse_on_reference_scene() {
        let mut cfg = small_cfg();
        cfg.point_density_dense = 100.0;
        let cloud = generate_scene(&cfg).unwrap();
        let sparse = lidar_subsample(&cloud, &scan_pose(&cfg), 16, 1.0_f64.to_radians());
        let ratio = sparse.len() as f64 / cloud.len() as f64;
        assert!(ratio < 0.1, "ratio {ratio}");
        assert!(!sparse.is_empty());
    }

    #[test]
    fn subsample_idempotent() {
        let cfg = small_cfg();
        let cloud = generate_scene(&cfg).unwrap();
        let pose = scan_pose(&cfg);
        let once = lidar_subsample(&cloud, &pose, 16, 1.0_f64.to_radians());
        let twice = lidar_subsample(&once, &pose, 16, 1.0_f64.to_radians());
        assert_eq!(once, twice);
    }

    #[test]
    fn cloud_io_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.txt");
        let cloud = generate_scene(&small_cfg()).unwrap();
        save_cloud(&cloud, &path).unwrap();
        let back = load_cloud(&path).unwrap();
        assert_eq!(cloud.len(), back.len());
        for i in 0..cloud.len() {
            assert!((cloud.points[i] - back.points[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn cloud_io_edge_cases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "").unwrap();
        assert!(load_cloud(&path).unwrap().is_empty());
        fs::write(&path, "1.0 2.0 3.0 0.5\n").unwrap();
        let c = load_cloud(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.intensity.as_ref().unwrap()[0], 0.5);
        fs::write(&path, "1 2 x\n").unwrap();
        assert!(matches!(load_cloud(&path), Err(CoreError::Parse { line: 1, .. })));
    }
}

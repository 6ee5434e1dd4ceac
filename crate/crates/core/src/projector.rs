//! Pinhole projection of point clouds into sparse depth images, synthetic
//! intensity rendering from dense clouds, and depth post-processing.
//!
//! Camera frame convention: +z forward, +x right, +y down. A `Pose` maps
//! camera coordinates to world coordinates.

use nalgebra::{Matrix3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{CoreError, Result};
use crate::img::{DepthImage, Image, IntensityImage};
use crate::se3::{euler_to_matrix, invert, Pose};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fx: 120.0,
            fy: 120.0,
            cx: 80.0,
            cy: 60.0,
            width: 160,
            height: 120,
        }
    }
}

/// Near/far clipping planes in meters.
#[derive(Debug, Clone, Copy)]
pub struct ClipPlanes {
    pub near: f64,
    pub far: f64,
}

impl Default for ClipPlanes {
    fn default() -> Self {
        ClipPlanes { near: 0.3, far: 50.0 }
    }
}

/// Normalized depth floor so a valid near-plane return stays distinguishable
/// from "no return".
pub const DEPTH_EPS: f64 = 1e-6;

/// Rotation mapping camera axes into the world when the viewing direction is
/// horizontal along world +x: cam x -> -y, cam y -> -z, cam z -> +x.
pub fn camera_axes() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

/// A camera pose at `position` looking horizontally, rotated by yaw about
/// world z (with optional pitch/roll in the world frame).
pub fn camera_pose(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Pose {
    let r = euler_to_matrix(Vector3::new(roll, pitch, yaw)) * camera_axes();
    Pose::from_parts(r, position)
}

/// Z-buffered pinhole projection. Points with camera-frame depth inside
/// [near, far] and a rounded pixel inside the viewport are rasterized; the
/// per-pixel minimum depth wins, ties keep the earlier point.
pub fn project_depth(
    cloud: &PointCloud,
    pose: &Pose,
    k: &CameraIntrinsics,
    g: &ClipPlanes,
) -> DepthImage {
    let mut img = Image::zeros(k.width, k.height);
    let to_cam = invert(pose);
    for p in &cloud.points {
        let c = to_cam.rotation * p + to_cam.translation;
        let z = c.z;
        if z < g.near || z > g.far {
            continue;
        }
        let u = (k.fx * c.x / z + k.cx).round();
        let v = (k.fy * c.y / z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
            continue;
        }
        let (ui, vi) = (u as usize, v as usize);
        let cur = img.at(ui, vi);
        if cur == 0.0 || z < cur {
            img.set(ui, vi, z);
        }
    }
    img
}

/// Recovers the world point seen at pixel (u, v) with the given depth.
pub fn unproject(u: usize, v: usize, depth: f64, pose: &Pose, k: &CameraIntrinsics) -> Vector3<f64> {
    let x = (u as f64 - k.cx) / k.fx * depth;
    let y = (v as f64 - k.cy) / k.fy * depth;
    pose.rotation * Vector3::new(x, y, depth) + pose.translation
}

/// Distance falloff applied to splatted intensities: half brightness at
/// [`SHADE_HALF_DEPTH`] meters, mimicking how near surfaces dominate the
/// lighting of a real camera image.
pub const SHADE_HALF_DEPTH: f64 = 5.0;

fn shade(z: f64) -> f64 {
    1.0 / (1.0 + (z / SHADE_HALF_DEPTH).powi(2))
}

/// Z-buffered intensity splatting over a dense cloud followed by hole-filling
/// diffusion. Each point covers a (2r+1)^2 pixel neighborhood and contributes
/// its intensity attenuated by distance shading; afterwards uncovered pixels
/// repeatedly take the mean of covered 4-neighbors until the image is dense
/// (or no progress is possible).
pub fn render_intensity(
    cloud: &PointCloud,
    pose: &Pose,
    k: &CameraIntrinsics,
    g: &ClipPlanes,
    splat_radius: usize,
) -> Result<IntensityImage> {
    let ints = cloud.intensity.as_ref().ok_or(CoreError::MissingIntensity)?;
    let mut img = Image::zeros(k.width, k.height);
    let mut zbuf = vec![f64::INFINITY; k.width * k.height];
    let to_cam = invert(pose);
    let r = splat_radius as isize;
    for (i, p) in cloud.points.iter().enumerate() {
        let c = to_cam.rotation * p + to_cam.translation;
        let z = c.z;
        if z < g.near || z > g.far {
            continue;
        }
        let u = (k.fx * c.x / z + k.cx).round() as isize;
        let v = (k.fy * c.y / z + k.cy).round() as isize;
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (u + du, v + dv);
                if x < 0 || y < 0 || x >= k.width as isize || y >= k.height as isize {
                    continue;
                }
                let idx = y as usize * k.width + x as usize;
                if z < zbuf[idx] {
                    zbuf[idx] = z;
                    img.data[idx] = ints[i] * shade(z);
                }
            }
        }
    }
    // Diffuse into uncovered pixels. Coverage is tracked via the z-buffer so
    // a legitimate intensity of 0.0 is not mistaken for a hole.
    let mut covered: Vec<bool> = zbuf.iter().map(|z| z.is_finite()).collect();
    loop {
        let mut next = img.clone();
        let mut next_covered = covered.clone();
        let mut progressed = false;
        for y in 0..k.height {
            for x in 0..k.width {
                let idx = y * k.width + x;
                if covered[idx] {
                    continue;
                }
                let mut sum = 0.0;
                let mut n = 0usize;
                let mut visit = |xx: isize, yy: isize| {
                    if xx >= 0 && yy >= 0 && xx < k.width as isize && yy < k.height as isize {
                        let j = yy as usize * k.width + xx as usize;
                        if covered[j] {
                            sum += img.data[j];
                            n += 1;
                        }
                    }
                };
                visit(x as isize - 1, y as isize);
                visit(x as isize + 1, y as isize);
                visit(x as isize, y as isize - 1);
                visit(x as isize, y as isize + 1);
                if n > 0 {
                    next.data[idx] = sum / n as f64;
                    next_covered[idx] = true;
                    progressed = true;
                }
            }
        }
        img = next;
        covered = next_covered;
        if !progressed {
            break;
        }
    }
    Ok(img)
}

/// One pass replaces each zero pixel having at least one nonzero 4-neighbor
/// by the mean of those neighbors; nonzero pixels never change. Updates are
/// synchronous within a pass.
pub fn inpaint_depth(d: &DepthImage, iterations: usize) -> DepthImage {
    let mut cur = d.clone();
    for _ in 0..iterations {
        let mut next = cur.clone();
        for y in 0..d.height {
            for x in 0..d.width {
                if cur.at(x, y) != 0.0 {
                    continue;
                }
                let mut sum = 0.0;
                let mut n = 0usize;
                let mut visit = |xx: isize, yy: isize| {
                    if xx >= 0 && yy >= 0 && xx < d.width as isize && yy < d.height as isize {
                        let v = cur.at(xx as usize, yy as usize);
                        if v != 0.0 {
                            sum += v;
                            n += 1;
                        }
                    }
                };
                visit(x as isize - 1, y as isize);
                visit(x as isize + 1, y as isize);
                visit(x as isize, y as isize - 1);
                visit(x as isize, y as isize + 1);
                if n > 0 {
                    next.set(x, y, sum / n as f64);
                }
            }
        }
        cur = next;
    }
    cur
}

/// Maps nonzero depth v to (v - near) / (far - near), floored at
/// [`DEPTH_EPS`]; zero ("no return") stays zero.
pub fn normalize_depth(d: &DepthImage, g: &ClipPlanes) -> Image {
    let scale = 1.0 / (g.far - g.near);
    let data = d
        .data
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                (((v - g.near) * scale).clamp(0.0, 1.0)).max(DEPTH_EPS)
            }
        })
        .collect();
    Image::from_vec(d.width, d.height, data)
}

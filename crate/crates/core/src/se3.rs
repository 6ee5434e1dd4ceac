//! SE(3) pose algebra with a fixed intrinsic Z-Y-X (yaw-pitch-roll) Euler
//! convention: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
//!
//! Angles are radians everywhere inside the library; degrees appear only at
//! CLI boundaries.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::error::{CoreError, Result};

/// Pitch values closer than this to +-pi/2 are reported as singular.
const PITCH_SINGULARITY_EPS: f64 = 1e-6;

/// A rigid transform: orthonormal rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// A small relative transform expressed as Euler angles (roll, pitch, yaw)
/// and a translation offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPose {
    /// (roll, pitch, yaw) in radians.
    pub d_rotation: Vector3<f64>,
    /// Offset in meters.
    pub d_translation: Vector3<f64>,
    /// Set when the Euler extraction hit the pitch = +-pi/2 singularity;
    /// roll is folded into yaw in that case.
    pub singular: bool,
}

/// Per-axis bounds for random pose perturbation.
#[derive(Debug, Clone, Copy)]
pub struct PerturbBounds {
    /// Radians, per axis.
    pub max_rotation: f64,
    /// Meters, per axis.
    pub max_translation: f64,
    pub samples_per_frame: usize,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    /// Builds a pose from (roll, pitch, yaw) Euler angles and a translation.
    pub fn from_euler(euler: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: euler_to_matrix(euler),
            translation,
        }
    }

    /// Serializes as one ASCII line: `tx ty tz roll pitch yaw flag`.
    pub fn to_line(&self) -> String {
        let (e, singular) = matrix_to_euler(&self.rotation);
        format!(
            "{} {} {} {} {} {} {}",
            self.translation.x,
            self.translation.y,
            self.translation.z,
            e.x,
            e.y,
            e.z,
            if singular { 1 } else { 0 }
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CoreError::Parse {
                line: 1,
                msg: format!("bad pose component: {e}"),
            })?;
        if vals.len() != 7 {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("expected 7 pose fields, got {}", vals.len()),
            });
        }
        Ok(Pose::from_euler(
            Vector3::new(vals[3], vals[4], vals[5]),
            Vector3::new(vals[0], vals[1], vals[2]),
        ))
    }
}

impl DeltaPose {
    pub fn zero() -> Self {
        DeltaPose {
            d_rotation: Vector3::zeros(),
            d_translation: Vector3::zeros(),
            singular: false,
        }
    }

    pub fn new(d_rotation: Vector3<f64>, d_translation: Vector3<f64>) -> Self {
        DeltaPose {
            d_rotation,
            d_translation,
            singular: false,
        }
    }

    /// The equivalent rigid transform.
    pub fn to_pose(&self) -> Pose {
        Pose::from_euler(self.d_rotation, self.d_translation)
    }

    /// Euclidean norm over all six components.
    pub fn norm(&self) -> f64 {
        (self.d_rotation.norm_squared() + self.d_translation.norm_squared()).sqrt()
    }

    /// The six components in label order: tx ty tz roll pitch yaw.
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.d_translation.x,
            self.d_translation.y,
            self.d_translation.z,
            self.d_rotation.x,
            self.d_rotation.y,
            self.d_rotation.z,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        DeltaPose::new(Vector3::new(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]))
    }
}

/// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_to_matrix(e: Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = e.x.sin_cos();
    let (sp, cp) = e.y.sin_cos();
    let (sy, cy) = e.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Extracts (roll, pitch, yaw) from a rotation matrix. Returns the singularity
/// flag; near pitch = +-pi/2 roll is set to 0 and the residual rotation is
/// folded into yaw.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> (Vector3<f64>, bool) {
    let sp = -r[(2, 0)];
    let sp_clamped = sp.clamp(-1.0, 1.0);
    let pitch = sp_clamped.asin();
    if (std::f64::consts::FRAC_PI_2 - pitch.abs()).abs() < PITCH_SINGULARITY_EPS
        || 1.0 - sp_clamped.abs() < PITCH_SINGULARITY_EPS
    {
        // Gimbal lock: only yaw -+ roll is observable.
        let yaw = if sp_clamped > 0.0 {
            r[(1, 2)].atan2(r[(1, 1)])
        } else {
            (-r[(1, 2)]).atan2(r[(1, 1)])
        };
        (Vector3::new(0.0, pitch, yaw), true)
    } else {
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        (Vector3::new(roll, pitch, yaw), false)
    }
}

/// `a` applied after `b`: result transforms a point by `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert(p: &Pose) -> Pose {
    let rt = p.rotation.transpose();
    Pose {
        rotation: rt,
        translation: -(rt * p.translation),
    }
}

/// Relative transform taking `p_d`'s frame to `p_i`'s frame:
/// `invert(p_d) ∘ p_i`, reported as Euler angles plus translation.
pub fn pose_diff(p_i: &Pose, p_d: &Pose) -> DeltaPose {
    let rel = compose(&invert(p_d), p_i);
    let (e, singular) = matrix_to_euler(&rel.rotation);
    DeltaPose {
        d_rotation: e,
        d_translation: rel.translation,
        singular,
    }
}

/// Applies a relative transform in `p`'s local frame, inverting [`pose_diff`]:
/// `pose_diff(apply_delta(p, d), p) == d` away from the pitch singularity.
pub fn apply_delta(p: &Pose, d: &DeltaPose) -> Pose {
    compose(p, &d.to_pose())
}

/// Draws each component uniformly within its +-bound. Deterministic under a
/// seeded RNG.
pub fn sample_perturbation<R: Rng>(rng: &mut R, bounds: &PerturbBounds) -> DeltaPose {
    let mut draw = |b: f64| {
        if b == 0.0 {
            0.0
        } else {
            rng.random_range(-b..=b)
        }
    };
    let t = Vector3::new(
        draw(bounds.max_translation),
        draw(bounds.max_translation),
        draw(bounds.max_translation),
    );
    let r = Vector3::new(
        draw(bounds.max_rotation),
        draw(bounds.max_rotation),
        draw(bounds.max_rotation),
    );
    DeltaPose::new(r, t)
}

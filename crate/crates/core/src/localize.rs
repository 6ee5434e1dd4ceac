//! Iterative pose refinement against a sparse map and single-shot test-set
//! evaluation.

use crate::cloud::PointCloud;
use crate::dataset::PairSample;
use crate::error::Result;
use crate::img::IntensityImage;
use crate::model::{EnforceModel, Mode};
use crate::model_input::stack_pair;
use crate::nn::tape::Tape;
use crate::projector::{
    inpaint_depth, normalize_depth, project_depth, CameraIntrinsics, ClipPlanes,
};
use crate::se3::{apply_delta, DeltaPose, Pose};

/// One prediction from an image pair: the relative pose correction plus the
/// state value of the current guess.
pub trait PoseModel {
    fn predict(
        &mut self,
        intensity: &IntensityImage,
        depth: &IntensityImage,
    ) -> Result<(DeltaPose, f64)>;
}

impl PoseModel for EnforceModel {
    fn predict(
        &mut self,
        intensity: &IntensityImage,
        depth: &IntensityImage,
    ) -> Result<(DeltaPose, f64)> {
        let input = stack_pair(intensity, depth)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input, false);
        let h = self.forward(&mut tape, x, Mode::Eval)?;
        let pose = tape.value(h.pose);
        let delta = DeltaPose::from_array(pose.data[0..6].try_into().unwrap());
        Ok((delta, tape.value(h.value).data[0]))
    }
}

#[derive(Debug, Clone)]
pub struct LocalizeResult {
    pub pose: Pose,
    /// Final state value F, unnormalized.
    pub confidence: f64,
    pub iterations_used: usize,
    /// Per iteration: (predicted correction magnitude, state value).
    pub trace: Vec<(f64, f64)>,
    /// A guess saw no map points and the loop stopped early.
    pub aborted: bool,
}

pub const DEFAULT_LOCALIZE_TOL: f64 = 0.01;
pub const DEFAULT_LOCALIZE_MAX_ITERS: usize = 10;

/// Refines `init` by repeatedly rendering the map at the current guess and
/// applying the model's predicted correction. Stops when the predicted
/// translation magnitude drops below `tol` or after `max_iters`.
#[allow(clippy::too_many_arguments)]
pub fn localize<M: PoseModel>(
    intensity: &IntensityImage,
    cloud: &PointCloud,
    init: &Pose,
    model: &mut M,
    k: &CameraIntrinsics,
    g: &ClipPlanes,
    max_iters: usize,
    tol: f64,
    inpaint_iters: usize,
) -> Result<LocalizeResult> {
    let mut guess = *init;
    let mut trace = Vec::new();
    let mut confidence = 0.0;
    let mut iterations_used = 0;
    let mut aborted = false;
    for _ in 0..max_iters {
        let raw = project_depth(cloud, &guess, k, g);
        if raw.count_nonzero() == 0 {
            aborted = true;
            break;
        }
        let depth = normalize_depth(&inpaint_depth(&raw, inpaint_iters), g);
        let (delta, value) = model.predict(intensity, &depth)?;
        iterations_used += 1;
        confidence = value;
        trace.push((delta.norm(), value));
        guess = apply_delta(&guess, &delta);
        if delta.d_translation.norm() < tol {
            break;
        }
    }
    Ok(LocalizeResult {
        pose: guess,
        confidence,
        iterations_used,
        trace,
        aborted,
    })
}

/// Mean errors over a test set in the fixed column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTable {
    /// Mean translation-vector norm (meters).
    pub e_trans: f64,
    /// Mean rotation-vector norm (radians).
    pub e_rotation: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub e_roll: f64,
    pub e_pitch: f64,
    pub e_yaw: f64,
}

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        format!(
            "E_trans,E_rotation,E_x,E_y,E_z,E_roll,E_pitch,E_yaw\n{},{},{},{},{},{},{},{}\n",
            self.e_trans,
            self.e_rotation,
            self.e_x,
            self.e_y,
            self.e_z,
            self.e_roll,
            self.e_pitch,
            self.e_yaw
        )
    }
}

/// Single-shot prediction errors aggregated over the test split.
pub fn evaluate<M: PoseModel>(model: &mut M, samples: &[PairSample]) -> Result<ErrorTable> {
    assert!(!samples.is_empty(), "evaluate needs a nonempty test set");
    let mut sum = [0.0f64; 8];
    for s in samples {
        let (pred, _) = model.predict(&s.intensity, &s.depth)?;
        let p = pred.as_array();
        let l = s.label.as_array();
        let err: Vec<f64> = p.iter().zip(l).map(|(a, b)| a - b).collect();
        sum[0] += (err[0] * err[0] + err[1] * err[1] + err[2] * err[2]).sqrt();
        sum[1] += (err[3] * err[3] + err[4] * err[4] + err[5] * err[5]).sqrt();
        for i in 0..6 {
            sum[2 + i] += err[i].abs();
        }
    }
    let n = samples.len() as f64;
    Ok(ErrorTable {
        e_trans: sum[0] / n,
        e_rotation: sum[1] / n,
        e_x: sum[2] / n,
        e_y: sum[3] / n,
        e_z: sum[4] / n,
        e_roll: sum[5] / n,
        e_pitch: sum[6] / n,
        e_yaw: sum[7] / n,
    })
}

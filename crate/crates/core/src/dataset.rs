//! Labeled image-pair samples: pose-perturbation augmentation, frame-level
//! dataset splits, and directory persistence (CSV index + PGM images).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::error::{CoreError, Result};
use crate::img::Image;
use crate::pgm;
use crate::projector::{
    inpaint_depth, normalize_depth, project_depth, CameraIntrinsics, ClipPlanes,
};
use crate::se3::{
    compose, invert, pose_diff, sample_perturbation, DeltaPose, PerturbBounds, Pose,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleMeta {
    pub frame: usize,
    pub garage: usize,
    pub trajectory: usize,
}

/// One training sample: the frame's intensity image, a normalized depth
/// image rendered at a perturbed pose, and the ground-truth pose difference.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub id: usize,
    pub intensity: Image,
    /// Normalized depth in [0, 1], 0 = no return.
    pub depth: Image,
    pub label: DeltaPose,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Expands each frame into `bounds.samples_per_frame` labeled pairs.
///
/// For every frame at pose P_i a perturbation d is drawn and the depth image
/// is rendered from the sparse cloud at the perturbed pose
/// `P_d = P_i ∘ d⁻¹`, so the ground-truth label `pose_diff(P_i, P_d)`
/// equals d exactly and stays inside the perturbation envelope per
/// component. Samples whose render sees no points are skipped and counted.
pub fn augment_dataset(
    frames: &[(Pose, Image)],
    sparse: &PointCloud,
    bounds: &PerturbBounds,
    k: &CameraIntrinsics,
    g: &ClipPlanes,
    inpaint_iters: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<PairSample>, usize) {
    let mut samples = Vec::with_capacity(frames.len() * bounds.samples_per_frame);
    let mut skipped = 0usize;
    let mut next_id = 0usize;
    for (frame_idx, (p_i, intensity)) in frames.iter().enumerate() {
        for _ in 0..bounds.samples_per_frame {
            let d = sample_perturbation(rng, bounds);
            let p_d = compose(p_i, &invert(&d.to_pose()));
            let raw = project_depth(sparse, &p_d, k, g);
            if raw.count_nonzero() == 0 {
                skipped += 1;
                continue;
            }
            let depth = normalize_depth(&inpaint_depth(&raw, inpaint_iters), g);
            let label = pose_diff(p_i, &p_d);
            samples.push(PairSample {
                id: next_id,
                intensity: intensity.clone(),
                depth,
                label,
                meta: SampleMeta {
                    frame: frame_idx,
                    garage: 0,
                    trajectory: 0,
                },
            });
            next_id += 1;
        }
    }
    (samples, skipped)
}

/// Splits by frame id so every augmentation of a frame lands in one split.
pub fn split_dataset(
    samples: Vec<PairSample>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<PairSample>, Vec<PairSample>, Vec<PairSample>)> {
    let (f_train, f_val, f_test) = fractions;
    assert!((f_train + f_val + f_test - 1.0).abs() < 1e-9, "fractions must sum to 1");
    let mut frames: Vec<usize> = samples.iter().map(|s| s.meta.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    let nf = frames.len();
    let n_train = (nf as f64 * f_train).round() as usize;
    let n_val = (nf as f64 * f_val).round() as usize;
    if n_train == 0 {
        return Err(CoreError::TooFewFrames("train"));
    }
    if n_val == 0 {
        return Err(CoreError::TooFewFrames("val"));
    }
    if n_train + n_val >= nf {
        return Err(CoreError::TooFewFrames("test"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frames.shuffle(&mut rng);
    let split_of = |frame: usize| -> Split {
        let pos = frames.iter().position(|&f| f == frame).unwrap();
        if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    };
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        match split_of(s.meta.frame) {
            Split::Train => train.push(s),
            Split::Val => val.push(s),
            Split::Test => test.push(s),
        }
    }
    Ok((train, val, test))
}

/// Writes index.csv plus one intensity PGM per frame and one depth PGM per
/// sample.
pub fn save_dataset(
    dir: &Path,
    splits: &[(&[PairSample], Split)],
    frame_poses: &[Pose],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = Vec::new();
    writeln!(
        index,
        "sample_id,frame_id,split,tx,ty,tz,roll,pitch,yaw,intensity_file,depth_file"
    )?;
    let mut written_frames = std::collections::HashSet::new();
    for (samples, split) in splits {
        for s in *samples {
            let intensity_file = format!("frame_{:04}_intensity.pgm", s.meta.frame);
            let depth_file = format!("sample_{:06}_depth.pgm", s.id);
            if written_frames.insert(s.meta.frame) {
                pgm::save_intensity_pgm(
                    &s.intensity,
                    &frame_poses[s.meta.frame],
                    &dir.join(&intensity_file),
                )?;
            }
            pgm::save_depth_pgm(&s.depth, &frame_poses[s.meta.frame], &dir.join(&depth_file))?;
            let l = s.label.as_array();
            writeln!(
                index,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.id,
                s.meta.frame,
                split.as_str(),
                l[0],
                l[1],
                l[2],
                l[3],
                l[4],
                l[5],
                intensity_file,
                depth_file
            )?;
        }
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

/// Loads a dataset directory back into per-split sample lists.
pub fn load_dataset(
    dir: &Path,
) -> Result<(Vec<PairSample>, Vec<PairSample>, Vec<PairSample>)> {
    let text = fs::read_to_string(dir.join("index.csv"))?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut intensity_cache: std::collections::HashMap<String, Image> =
        std::collections::HashMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(CoreError::Parse {
                line: lineno + 1,
                msg: format!("expected 11 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| CoreError::Parse {
                line: lineno + 1,
                msg: format!("{e}"),
            })
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse().map_err(|e| CoreError::Parse {
                line: lineno + 1,
                msg: format!("{e}"),
            })
        };
        let id = parse_u(fields[0])?;
        let frame = parse_u(fields[1])?;
        let split = Split::parse(fields[2]).ok_or_else(|| CoreError::Parse {
            line: lineno + 1,
            msg: format!("unknown split {:?}", fields[2]),
        })?;
        let mut label = [0.0; 6];
        for (i, f) in fields[3..9].iter().enumerate() {
            label[i] = parse_f(f)?;
        }
        let intensity = match intensity_cache.get(fields[9]) {
            Some(img) => img.clone(),
            None => {
                let (img, _) = pgm::load_pgm(&dir.join(fields[9]))?;
                intensity_cache.insert(fields[9].to_string(), img.clone());
                img
            }
        };
        let (depth, _) = pgm::load_pgm(&dir.join(fields[10]))?;
        let sample = PairSample {
            id,
            intensity,
            depth,
            label: DeltaPose::from_array(label),
            meta: SampleMeta {
                frame,
                garage: 0,
                trajectory: 0,
            },
        };
        match split {
            Split::Train => train.push(sample),
            Split::Val => val.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Ok((train, val, test))
}

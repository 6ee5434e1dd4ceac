//! Entropy-based similarity and grid-search registration of an intensity
//! image against depth renderings of a point cloud.

use crate::cloud::PointCloud;
use crate::error::{CoreError, Result};
use crate::img::{Image, IntensityImage};
use crate::projector::{inpaint_depth, project_depth, CameraIntrinsics, ClipPlanes};
use crate::se3::{apply_delta, DeltaPose, Pose};

/// Normalized mutual information (H(a) + H(b)) / H(a, b), in [1, 2].
///
/// Pixels that are exactly 0 in either image are treated as "no data" and
/// excluded from the joint histogram, which keeps the measure symmetric and
/// stops sparse-depth emptiness from dominating the joint entropy.
pub fn nmi_similarity(a: &Image, b: &Image, bins: usize) -> Result<f64> {
    assert!(bins >= 2);
    if !a.same_dims(b) {
        return Err(CoreError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let pairs: Vec<(f64, f64)> = a
        .data
        .iter()
        .zip(&b.data)
        .filter(|(&x, &y)| x != 0.0 && y != 0.0)
        .map(|(&x, &y)| (x, y))
        .collect();
    if pairs.is_empty() {
        return Err(CoreError::EmptyOverlap);
    }
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in vals {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    };
    let (alo, ahi) = range(&mut pairs.iter().map(|p| p.0));
    let (blo, bhi) = range(&mut pairs.iter().map(|p| p.1));
    let bin_of = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            0
        } else {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        }
    };
    let mut joint = vec![0.0f64; bins * bins];
    for &(x, y) in &pairs {
        joint[bin_of(x, alo, ahi) * bins + bin_of(y, blo, bhi)] += 1.0;
    }
    let n = pairs.len() as f64;
    let mut ha = 0.0;
    let mut hb = 0.0;
    let mut hab = 0.0;
    let mut marg_a = vec![0.0f64; bins];
    let mut marg_b = vec![0.0f64; bins];
    for i in 0..bins {
        for j in 0..bins {
            let p = joint[i * bins + j] / n;
            if p > 0.0 {
                hab -= p * p.ln();
            }
            marg_a[i] += p;
            marg_b[j] += p;
        }
    }
    for &p in &marg_a {
        if p > 0.0 {
            ha -= p * p.ln();
        }
    }
    for &p in &marg_b {
        if p > 0.0 {
            hb -= p * p.ln();
        }
    }
    if hab <= 0.0 {
        // Both images constant over the valid pairs: perfectly dependent.
        return Ok(2.0);
    }
    Ok((ha + hb) / hab)
}

/// Result of a grid-search registration.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: DeltaPose,
    pub best_index: usize,
    /// One score per grid candidate, in input order; failed candidates score
    /// negative infinity.
    pub scores: Vec<f64>,
}

/// Renders depth at every candidate offset from `center`, scores each against
/// the intensity image with NMI, and returns the argmax. Candidate depth is
/// diffusion-filled before scoring so the comparison is not dominated by
/// which pixels happen to receive a point. Ties break toward the candidate
/// with the smallest norm, then the lower index.
pub fn grid_search_register(
    intensity: &IntensityImage,
    cloud: &PointCloud,
    center: &Pose,
    grid: &[DeltaPose],
    k: &CameraIntrinsics,
    g: &ClipPlanes,
    bins: usize,
) -> GridSearchResult {
    assert!(!grid.is_empty());
    let fill = k.width + k.height; // enough passes to reach every pixel
    let mut scores = Vec::with_capacity(grid.len());
    for d in grid {
        let pose = apply_delta(center, d);
        let depth = inpaint_depth(&project_depth(cloud, &pose, k, g), fill);
        let s = match nmi_similarity(intensity, &depth, bins) {
            Ok(v) => v,
            Err(CoreError::EmptyOverlap) => f64::NEG_INFINITY,
            Err(_) => f64::NEG_INFINITY,
        };
        scores.push(s);
    }
    let mut best_index = 0;
    for i in 1..grid.len() {
        let better = scores[i] > scores[best_index]
            || (scores[i] == scores[best_index] && grid[i].norm() < grid[best_index].norm());
        if better {
            best_index = i;
        }
    }
    GridSearchResult {
        best: grid[best_index],
        best_index,
        scores,
    }
}

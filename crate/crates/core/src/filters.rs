//! Image filters used by the classical registration pipeline: Gaussian blur,
//! local contrast normalization, and Sobel gradients. All filters use
//! symmetric reflect padding.

use crate::error::{CoreError, Result};
use crate::img::Image;

/// Separable Gaussian blur, kernel truncated at 3 sigma. `sigma == 0` is the
/// identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let w = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(w);
        sum += w;
    }
    for w in &mut kernel {
        *w /= sum;
    }
    // Horizontal pass.
    let mut tmp = Image::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                acc += w * img.at_reflect(x as isize + ki as isize - radius, y as isize);
            }
            tmp.set(x, y, acc);
        }
    }
    // Vertical pass.
    let mut out = Image::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                acc += w * tmp.at_reflect(x as isize, y as isize + ki as isize - radius);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Per-pixel (v - mean) / (std + 1e-6) over an odd window of at least 3.
pub fn local_contrast_normalize(img: &Image, window: usize) -> Image {
    assert!(window >= 3 && window % 2 == 1, "window must be odd >= 3");
    let r = (window / 2) as isize;
    let n = (window * window) as f64;
    let mut out = Image::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = img.at_reflect(x as isize + dx, y as isize + dy);
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sumsq / n - mean * mean).max(0.0);
            out.set(x, y, (img.at(x, y) - mean) / (var.sqrt() + 1e-6));
        }
    }
    out
}

/// Standard 3x3 Sobel pair; returns (magnitude, orientation) where
/// orientation is atan2(gy, gx).
pub fn sobel_gradient(img: &Image) -> Result<(Image, Image)> {
    if img.width < 3 || img.height < 3 {
        return Err(CoreError::ImageTooSmall {
            width: img.width,
            height: img.height,
        });
    }
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut mag = Image::zeros(img.width, img.height);
    let mut ori = Image::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for ky in 0..3 {
                for kx in 0..3 {
                    let v = img.at_reflect(x as isize + kx as isize - 1, y as isize + ky as isize - 1);
                    gx += KX[ky][kx] * v;
                    gy += KX[kx][ky] * v; // transposed kernel
                }
            }
            mag.set(x, y, (gx * gx + gy * gy).sqrt());
            ori.set(x, y, gy.atan2(gx));
        }
    }
    Ok((mag, ori))
}

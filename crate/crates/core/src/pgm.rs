//! Binary PGM (P5) persistence for depth and intensity images.
//!
//! Depth images are stored 16-bit big-endian with value = round(65535 *
//! normalized depth) and 0 meaning "no return". Intensity images are stored
//! 8-bit. The header carries the rendering pose as a comment line.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::img::Image;
use crate::se3::Pose;

/// Writes a normalized depth image (values in [0, 1], 0 = no return).
pub fn save_depth_pgm(img: &Image, pose: &Pose, path: &Path) -> Result<()> {
    let mut buf = header(img, pose, 65535);
    for &v in &img.data {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Writes an intensity image (values in [0, 1]).
pub fn save_intensity_pgm(img: &Image, pose: &Pose, path: &Path) -> Result<()> {
    let mut buf = header(img, pose, 255);
    for &v in &img.data {
        buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads either variant back; 16-bit values are scaled by 1/65535 and 8-bit
/// by 1/255, so the result is in [0, 1] either way.
pub fn load_pgm(path: &Path) -> Result<(Image, Pose)> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

fn header(img: &Image, pose: &Pose, maxval: u32) -> Vec<u8> {
    format!(
        "P5\n# {}\n{} {}\n{}\n",
        pose.to_line(),
        img.width,
        img.height,
        maxval
    )
    .into_bytes()
}

fn parse_pgm(bytes: &[u8]) -> Result<(Image, Pose)> {
    let bad = |msg: &str| CoreError::Parse {
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(bad("not a P5 PGM"));
    }
    let mut pos = 2usize;
    let mut pose = Pose::identity();
    let mut fields = [0usize; 3]; // width, height, maxval
    let mut nfields = 0;
    while nfields < 3 {
        // Skip whitespace; a '#' starts a comment running to end of line.
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| pos + i)
                .unwrap_or(bytes.len());
            let comment = std::str::from_utf8(&bytes[pos + 1..end])
                .map_err(|_| bad("non-utf8 comment"))?
                .trim();
            if comment.split_whitespace().count() == 7 {
                pose = Pose::from_line(comment)?;
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-utf8 header"))?;
        fields[nfields] = tok
            .parse()
            .map_err(|_| bad(&format!("bad header field {tok:?}")))?;
        nfields += 1;
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    let npix = width * height;
    let mut data = Vec::with_capacity(npix);
    if maxval > 255 {
        if bytes.len() < pos + 2 * npix {
            return Err(bad("truncated 16-bit raster"));
        }
        for i in 0..npix {
            let v = u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]);
            data.push(v as f64 / maxval as f64);
        }
    } else {
        if bytes.len() < pos + npix {
            return Err(bad("truncated 8-bit raster"));
        }
        for i in 0..npix {
            data.push(bytes[pos + i] as f64 / maxval as f64);
        }
    }
    Ok((Image::from_vec(width, height, data), pose))
}

//! Dense 2D scalar grids backing both depth and intensity images.
//!
//! Depth images use 0.0 as "no return"; intensity images are in [0, 1].

/// Row-major 2D grid of f64 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Per-pixel depth in meters, 0 = no return.
pub type DepthImage = Image;
/// Per-pixel intensity in [0, 1].
pub type IntensityImage = Image;

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Image { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Reflect (symmetric) boundary lookup: index -1 maps to 0, n maps to n-1.
    #[inline]
    pub fn at_reflect(&self, x: isize, y: isize) -> f64 {
        let rx = reflect_index(x, self.width);
        let ry = reflect_index(y, self.height);
        self.data[ry * self.width + rx]
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // Symmetric reflection: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

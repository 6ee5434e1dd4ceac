//! Stacking image pairs into network input tensors.

use crate::error::{CoreError, Result};
use crate::img::Image;
use crate::nn::tensor::Tensor;

/// Stacks an intensity image (channel 0) and a normalized depth image
/// (channel 1) into a 1x2xHxW tensor.
pub fn stack_pair(intensity: &Image, depth: &Image) -> Result<Tensor> {
    stack_batch_images(&[(intensity, depth)])
}

/// Stacks B image pairs into a Bx2xHxW tensor.
pub fn stack_batch_images(pairs: &[(&Image, &Image)]) -> Result<Tensor> {
    assert!(!pairs.is_empty());
    let (w, h) = (pairs[0].0.width, pairs[0].0.height);
    let mut data = Vec::with_capacity(pairs.len() * 2 * w * h);
    for (i, d) in pairs {
        if !i.same_dims(d) || i.width != w || i.height != h {
            return Err(CoreError::DimensionMismatch(i.width, i.height, d.width, d.height));
        }
        data.extend_from_slice(&i.data);
        data.extend_from_slice(&d.data);
    }
    Ok(Tensor::from_vec(&[pairs.len(), 2, h, w], data))
}

/// Splits a 1x2xHxW tensor back into its (intensity, depth) pair.
pub fn unstack_pair(t: &Tensor) -> (Image, Image) {
    assert_eq!(t.shape.len(), 4);
    assert_eq!(t.shape[0], 1);
    assert_eq!(t.shape[1], 2);
    let (h, w) = (t.shape[2], t.shape[3]);
    let sp = h * w;
    (
        Image::from_vec(w, h, t.data[0..sp].to_vec()),
        Image::from_vec(w, h, t.data[sp..2 * sp].to_vec()),
    )
}

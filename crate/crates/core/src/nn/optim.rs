//! RMSProp parameter updates.

use crate::error::{CoreError, Result};
use crate::nn::tensor::Tensor;

/// Per-parameter mean-square accumulators plus the update hyperparameters.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    acc: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(lr: f64, rho: f64, eps: f64) -> Self {
        assert!(rho > 0.0 && rho < 1.0);
        RmsProp {
            lr,
            rho,
            eps,
            acc: Vec::new(),
        }
    }

    /// `acc <- rho * acc + (1 - rho) * g^2 ; p <- p - lr * g / (sqrt(acc) + eps)`
    ///
    /// `grads[i]` pairs with `params[i]`; accumulators are created on first
    /// use and keyed by position, so the parameter order must stay stable.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "rmsprop: {} params vs {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.acc.is_empty() {
            self.acc = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        }
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.acc) {
            if !p.same_shape(g) || !p.same_shape(acc) {
                return Err(CoreError::ShapeMismatch(format!(
                    "rmsprop: param {:?} vs grad {:?}",
                    p.shape, g.shape
                )));
            }
            for i in 0..p.data.len() {
                let gv = g.data[i];
                acc.data[i] = self.rho * acc.data[i] + (1.0 - self.rho) * gv * gv;
                p.data[i] -= self.lr * gv / (acc.data[i].sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

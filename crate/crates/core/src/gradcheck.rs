//! Central finite-difference verification of the analytic gradients, over
//! sampled parameter entries of the full model + loss graph.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{EnforceModel, Mode};
use crate::model_input::stack_batch_images;
use crate::nn::tensor::Tensor;
use crate::nn::tape::Tape;
use crate::train::{batch_loss_graph, LossWeights, ValueTarget};

/// Maximum relative error between analytic and central-difference gradients
/// over sampled entries of every parameter array.
///
/// `analytic[i]` pairs with `params[i]`; `f` evaluates the scalar objective
/// at a given parameter setting. Entries are sampled deterministically from
/// `seed`.
pub fn max_rel_grad_err<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    mut f: F,
    entries_per_array: usize,
    h: f64,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    assert_eq!(params.len(), analytic.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let n = p.data.len();
        let picks: Vec<usize> = if n <= entries_per_array {
            (0..n).collect()
        } else {
            (0..entries_per_array).map(|_| rng.random_range(0..n)).collect()
        };
        for idx in picks {
            let orig = work[pi].data[idx];
            let mut central = |step: f64| -> Result<f64> {
                work[pi].data[idx] = orig + step;
                let plus = f(&work)?;
                work[pi].data[idx] = orig - step;
                let minus = f(&work)?;
                work[pi].data[idx] = orig;
                Ok((plus - minus) / (2.0 * step))
            };
            let ad = analytic[pi].data[idx];
            // Shrink the step when the first difference disagrees: a probe
            // whose interval straddles a ReLU/abs kink recovers under a
            // smaller step, while a genuinely wrong analytic gradient keeps
            // its error at every step size.
            let mut best = f64::INFINITY;
            for step in [h, h / 8.0, h / 64.0] {
                let fd = central(step)?;
                // The unit floor keeps cancellation noise from dominating
                // where the true derivative vanishes (e.g. a conv bias
                // feeding batchnorm, whose mean subtraction removes it
                // exactly).
                let denom = fd.abs().max(ad.abs()).max(1.0);
                best = best.min((fd - ad).abs() / denom);
                if best < 1e-4 {
                    break;
                }
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// Finite-difference check of the full network + combined loss on a tiny
/// random batch. Returns the worst relative gradient error.
pub fn model_gradcheck(seed: u64, entries_per_array: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(1));
    let (w, h) = (16usize, 12usize);
    let n = 2usize;
    let imgs: Vec<(crate::img::Image, crate::img::Image)> = (0..n)
        .map(|_| {
            let mut img = || {
                crate::img::Image::from_vec(
                    w,
                    h,
                    (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect(),
                )
            };
            (img(), img())
        })
        .collect();
    let refs: Vec<(&crate::img::Image, &crate::img::Image)> =
        imgs.iter().map(|(a, b)| (a, b)).collect();
    let input = stack_batch_images(&refs)?;
    let labels: Vec<[f64; 6]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3)))
        .collect();
    let weights = LossWeights::default();

    let base = EnforceModel::new(seed);
    let eval = |arrays: &[Tensor]| -> Result<f64> {
        let mut m = base.clone();
        for (p, a) in m.params_mut().into_iter().zip(arrays) {
            *p = a.clone();
        }
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), false);
        let hnd = m.forward(&mut tape, x, Mode::Train)?;
        let loss = batch_loss_graph(
            &mut tape,
            hnd.pose,
            hnd.value,
            &labels,
            &weights,
            weights.alpha3,
            ValueTarget::GroundTruthLoss,
        )?;
        Ok(tape.value(loss.total).data[0])
    };

    let params: Vec<Tensor> = base.named_params().iter().map(|(_, t)| (*t).clone()).collect();
    let analytic = {
        let mut m = base.clone();
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), false);
        let hnd = m.forward(&mut tape, x, Mode::Train)?;
        let loss = batch_loss_graph(
            &mut tape,
            hnd.pose,
            hnd.value,
            &labels,
            &weights,
            weights.alpha3,
            ValueTarget::GroundTruthLoss,
        )?;
        tape.backward(loss.total)?;
        m.collect_grads(&tape, &hnd)
    };
    max_rel_grad_err(&params, &analytic, eval, entries_per_array, 1e-5, seed)
}

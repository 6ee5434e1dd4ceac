//! Loss arithmetic and the training loop: weighted pose loss, the
//! state-value branch supervised by the negated (detached) pose loss, warmup
//! epochs with the value term masked, and RMSProp updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::PairSample;
use crate::error::{CoreError, Result};
use crate::model::{EnforceModel, Mode};
use crate::model_input::stack_batch_images;
use crate::nn::optim::RmsProp;
use crate::nn::tape::{NodeId, Tape};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    /// Rotation-error weight.
    pub alpha1: f64,
    /// Translation-error weight.
    pub alpha2: f64,
    /// Value-branch weight.
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 100.0,
            alpha2: 1.0,
            alpha3: 0.1,
        }
    }
}

/// What the state-value head regresses toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueTarget {
    /// S_t = negated per-sample pose loss of the current predictions,
    /// detached from the graph.
    PredictionLoss,
    /// S_t = negated weighted norm of the ground-truth label itself.
    GroundTruthLoss,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Epochs at the start with the value term's effective weight set to 0.
    pub warmup_epochs: usize,
    pub seed: u64,
    pub value_target: ValueTarget,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 60,
            lr: 1e-3,
            warmup_epochs: 10,
            seed: 0,
            value_target: ValueTarget::PredictionLoss,
            weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    /// "warmup" or "full".
    pub phase: &'static str,
    pub train_pose: f64,
    pub train_value: f64,
    pub val_pose: f64,
    pub val_value: f64,
    pub steps: usize,
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,phase,train_pose,train_value,val_pose,val_value\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.epoch, l.phase, l.train_pose, l.train_value, l.val_pose, l.val_value
        ));
    }
    out
}

/// Per-sample weighted pose error: `alpha1 * ||rot_err|| + alpha2 * ||t_err||`
/// with unsquared Euclidean norms. Components in label order
/// tx ty tz roll pitch yaw.
pub fn per_sample_pose_loss(pred: &[f64; 6], gt: &[f64; 6], w: &LossWeights) -> f64 {
    let tn = ((pred[0] - gt[0]).powi(2) + (pred[1] - gt[1]).powi(2) + (pred[2] - gt[2]).powi(2))
        .sqrt();
    let rn = ((pred[3] - gt[3]).powi(2) + (pred[4] - gt[4]).powi(2) + (pred[5] - gt[5]).powi(2))
        .sqrt();
    w.alpha1 * rn + w.alpha2 * tn
}

/// Batch mean of the per-sample weighted pose error.
pub fn pose_loss(pred: &[[f64; 6]], gt: &[[f64; 6]], w: &LossWeights) -> f64 {
    assert_eq!(pred.len(), gt.len());
    assert!(!pred.is_empty());
    pred.iter()
        .zip(gt)
        .map(|(p, g)| per_sample_pose_loss(p, g, w))
        .sum::<f64>()
        / pred.len() as f64
}

/// Negated pose loss as the state-value target.
pub fn state_value_target(per_sample_loss: f64) -> f64 {
    -per_sample_loss
}

/// Batch mean of `alpha3 * |S_t - F|`.
pub fn value_loss(f: &[f64], s_t: &[f64], w: &LossWeights) -> f64 {
    assert_eq!(f.len(), s_t.len());
    assert!(!f.is_empty());
    f.iter()
        .zip(s_t)
        .map(|(fi, si)| w.alpha3 * (si - fi).abs())
        .sum::<f64>()
        / f.len() as f64
}

pub fn total_loss(pose: f64, value: f64) -> f64 {
    pose + value
}

/// Loss nodes for one batch: the training objective plus its two components.
pub struct LossNodes {
    pub total: NodeId,
    pub pose: NodeId,
    pub value: NodeId,
}

/// Builds the batch loss graph over the model's outputs.
///
/// The value term is always built; `alpha3_effective` is 0 during warmup so
/// warmup updates are bitwise identical to a run trained with alpha3 = 0.
pub fn batch_loss_graph(
    tape: &mut Tape,
    pose_pred: NodeId,
    value_pred: NodeId,
    labels: &[[f64; 6]],
    w: &LossWeights,
    alpha3_effective: f64,
    value_target: ValueTarget,
) -> Result<LossNodes> {
    let n = labels.len();
    let label_leaf = tape.leaf(
        Tensor::from_vec(&[n, 6], labels.iter().flatten().copied().collect()),
        false,
    );
    let diff = tape.sub(pose_pred, label_leaf)?;
    let trans = tape.slice_cols(diff, 0, 3);
    let rot = tape.slice_cols(diff, 3, 3);
    let tn = tape.rows_norm(trans);
    let rn = tape.rows_norm(rot);
    let rn_w = tape.scale(rn, w.alpha1);
    let tn_w = tape.scale(tn, w.alpha2);
    let per_sample = tape.add(rn_w, tn_w)?;
    let pose = tape.mean_all(per_sample);

    let s_t = match value_target {
        ValueTarget::PredictionLoss => {
            let detached = tape.detach(per_sample);
            tape.scale(detached, -1.0)
        }
        ValueTarget::GroundTruthLoss => {
            let targets: Vec<f64> = labels
                .iter()
                .map(|l| -per_sample_pose_loss(l, &[0.0; 6], w))
                .collect();
            tape.leaf(Tensor::from_vec(&[n], targets), false)
        }
    };
    let f = tape.reshape(value_pred, &[n]);
    let gap = tape.sub(s_t, f)?;
    let abs_gap = tape.abs(gap);
    let mean_gap = tape.mean_all(abs_gap);
    let value = tape.scale(mean_gap, alpha3_effective);

    let total = tape.add(pose, value)?;
    Ok(LossNodes { total, pose, value })
}

fn batch_inputs(samples: &[&PairSample]) -> Result<(Tensor, Vec<[f64; 6]>)> {
    let pairs: Vec<(&crate::img::Image, &crate::img::Image)> =
        samples.iter().map(|s| (&s.intensity, &s.depth)).collect();
    let input = stack_batch_images(&pairs)?;
    let labels = samples.iter().map(|s| s.label.as_array()).collect();
    Ok((input, labels))
}

/// Mean pose and value losses over a split, eval mode, no updates.
fn eval_losses(
    model: &mut EnforceModel,
    samples: &[PairSample],
    w: &LossWeights,
    alpha3_effective: f64,
    value_target: ValueTarget,
    batch_size: usize,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut pose_sum = 0.0;
    let mut value_sum = 0.0;
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&PairSample> = chunk.iter().collect();
        let (input, labels) = batch_inputs(&refs)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input, false);
        let h = model.forward(&mut tape, x, Mode::Eval)?;
        let pose_out = tape.value(h.pose).clone();
        let value_out = tape.value(h.value).clone();
        for (i, gt) in labels.iter().enumerate() {
            let pred: [f64; 6] = pose_out.data[i * 6..(i + 1) * 6].try_into().unwrap();
            let pl = per_sample_pose_loss(&pred, gt, w);
            pose_sum += pl;
            let s_t = match value_target {
                ValueTarget::PredictionLoss => state_value_target(pl),
                ValueTarget::GroundTruthLoss => -per_sample_pose_loss(gt, &[0.0; 6], w),
            };
            value_sum += alpha3_effective * (s_t - value_out.data[i]).abs();
        }
    }
    let n = samples.len() as f64;
    Ok((pose_sum / n, value_sum / n))
}

/// Trains in place. Warmup epochs run the full graph with the value term's
/// weight at 0; afterwards the combined objective applies. Batches smaller
/// than 2 samples are skipped (train-mode batchnorm needs at least 2).
pub fn train(
    model: &mut EnforceModel,
    train_samples: &[PairSample],
    val_samples: &[PairSample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if train_samples.is_empty() {
        return Err(CoreError::TooFewFrames("train"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = RmsProp::new(cfg.lr, 0.99, 1e-8);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let warmup = epoch <= cfg.warmup_epochs;
        let alpha3_eff = if warmup { 0.0 } else { cfg.weights.alpha3 };
        order.shuffle(&mut rng);
        let mut pose_sum = 0.0;
        let mut value_sum = 0.0;
        let mut seen = 0usize;
        let mut steps = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let refs: Vec<&PairSample> = chunk.iter().map(|&i| &train_samples[i]).collect();
            let (input, labels) = batch_inputs(&refs)?;
            let mut tape = Tape::new();
            let x = tape.leaf(input, false);
            let h = model.forward(&mut tape, x, Mode::Train)?;
            let loss = batch_loss_graph(
                &mut tape,
                h.pose,
                h.value,
                &labels,
                &cfg.weights,
                alpha3_eff,
                cfg.value_target,
            )?;
            tape.backward(loss.total).map_err(|e| match e {
                CoreError::NonFinite(msg) => {
                    CoreError::NonFinite(format!("epoch {epoch} batch {batch_idx}: {msg}"))
                }
                other => other,
            })?;
            pose_sum += tape.value(loss.pose).data[0] * chunk.len() as f64;
            value_sum += tape.value(loss.value).data[0] * chunk.len() as f64;
            seen += chunk.len();
            let grads = model.collect_grads(&tape, &h);
            opt.step(&mut model.params_mut(), &grads)?;
            steps += 1;
        }
        let (val_pose, val_value) = eval_losses(
            model,
            val_samples,
            &cfg.weights,
            alpha3_eff,
            cfg.value_target,
            cfg.batch_size,
        )?;
        logs.push(EpochLog {
            epoch,
            phase: if warmup { "warmup" } else { "full" },
            train_pose: if seen > 0 { pose_sum / seen as f64 } else { 0.0 },
            train_value: if seen > 0 { value_sum / seen as f64 } else { 0.0 },
            val_pose,
            val_value,
            steps,
        });
    }
    Ok(logs)
}

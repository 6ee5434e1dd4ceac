//! The pose-regression network with its state-value branch.
//!
//! A 7-layer convolutional backbone (3x3 kernels, channel ladder
//! 2-16-32-32-64-64-128-128, batchnorm + ReLU after every conv, one residual
//! link across the two 64-channel layers) feeds a global average pool. Two
//! small dense heads share that backbone: a pose head with 6 outputs
//! (translation + Euler rotation) and a state-value head with 1 output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::tape::{NodeId, Tape};
use crate::nn::tensor::Tensor;

pub const BACKBONE_CHANNELS: [usize; 8] = [2, 16, 32, 32, 64, 64, 128, 128];
pub const BACKBONE_STRIDES: [usize; 7] = [2, 2, 1, 2, 1, 2, 2];
/// Residual link skips this conv block (input of the block is added to its
/// batchnorm output); both ends carry 64 channels at equal resolution.
pub const RESIDUAL_BLOCK: usize = 4;
pub const FEATURE_DIM: usize = 128;
pub const HEAD_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub w: Tensor,
    pub b: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct EnforceModel {
    pub convs: Vec<ConvBlock>,
    pub pose_fc1: DenseLayer,
    pub pose_fc2: DenseLayer,
    pub value_fc1: DenseLayer,
    pub value_fc2: DenseLayer,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

/// Node ids produced by one forward pass: the two head outputs plus the
/// parameter leaves in [`EnforceModel::named_params`] order.
pub struct ForwardHandles {
    pub pose: NodeId,
    pub value: NodeId,
    pub param_ids: Vec<NodeId>,
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::from_vec(
        shape,
        (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(-limit..limit))
            .collect(),
    )
}

impl EnforceModel {
    /// He-uniform weights, zero biases, unit batchnorm scale. Deterministic
    /// under the seed.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = (0..7)
            .map(|i| {
                let (cin, cout) = (BACKBONE_CHANNELS[i], BACKBONE_CHANNELS[i + 1]);
                ConvBlock {
                    w: he_uniform(&[cout, cin, 3, 3], cin * 9, &mut rng),
                    b: Tensor::zeros(&[cout]),
                    gamma: Tensor::from_vec(&[cout], vec![1.0; cout]),
                    beta: Tensor::zeros(&[cout]),
                    running_mean: vec![0.0; cout],
                    running_var: vec![1.0; cout],
                    stride: BACKBONE_STRIDES[i],
                }
            })
            .collect();
        let dense = |o: usize, f: usize, rng: &mut ChaCha8Rng| DenseLayer {
            w: he_uniform(&[o, f], f, rng),
            b: Tensor::zeros(&[o]),
        };
        EnforceModel {
            convs,
            pose_fc1: dense(HEAD_HIDDEN, FEATURE_DIM, &mut rng),
            pose_fc2: dense(6, HEAD_HIDDEN, &mut rng),
            value_fc1: dense(HEAD_HIDDEN, FEATURE_DIM, &mut rng),
            value_fc2: dense(1, HEAD_HIDDEN, &mut rng),
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Learnable arrays in a stable order (matched by `param_ids` of a
    /// forward pass and by the optimizer's accumulator slots).
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{}.w", i + 1), &c.w));
            out.push((format!("conv{}.b", i + 1), &c.b));
            out.push((format!("conv{}.gamma", i + 1), &c.gamma));
            out.push((format!("conv{}.beta", i + 1), &c.beta));
        }
        for (name, l) in [
            ("pose_fc1", &self.pose_fc1),
            ("pose_fc2", &self.pose_fc2),
            ("value_fc1", &self.value_fc1),
            ("value_fc2", &self.value_fc2),
        ] {
            out.push((format!("{name}.w"), &l.w));
            out.push((format!("{name}.b"), &l.b));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.w);
            out.push(&mut c.b);
            out.push(&mut c.gamma);
            out.push(&mut c.beta);
        }
        for l in [
            &mut self.pose_fc1,
            &mut self.pose_fc2,
            &mut self.value_fc1,
            &mut self.value_fc2,
        ] {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }

    /// Runs the shared backbone and both heads. Train mode uses batch
    /// statistics and updates the running averages in place.
    pub fn forward(&mut self, tape: &mut Tape, input: NodeId, mode: Mode) -> Result<ForwardHandles> {
        let mut param_ids = Vec::new();
        // Leaves must be inserted in named_params order; conv blocks are
        // consumed as we walk the backbone.
        let conv_leaves: Vec<[NodeId; 4]> = self
            .convs
            .iter()
            .map(|c| {
                [
                    tape.leaf(c.w.clone(), true),
                    tape.leaf(c.b.clone(), true),
                    tape.leaf(c.gamma.clone(), true),
                    tape.leaf(c.beta.clone(), true),
                ]
            })
            .collect();
        for ids in &conv_leaves {
            param_ids.extend_from_slice(ids);
        }
        let head_leaf = |l: &DenseLayer, tape: &mut Tape, param_ids: &mut Vec<NodeId>| {
            let w = tape.leaf(l.w.clone(), true);
            let b = tape.leaf(l.b.clone(), true);
            param_ids.push(w);
            param_ids.push(b);
            (w, b)
        };
        let pose1 = head_leaf(&self.pose_fc1, tape, &mut param_ids);
        let pose2 = head_leaf(&self.pose_fc2, tape, &mut param_ids);
        let val1 = head_leaf(&self.value_fc1, tape, &mut param_ids);
        let val2 = head_leaf(&self.value_fc2, tape, &mut param_ids);

        let mut x = input;
        for (i, ids) in conv_leaves.iter().enumerate() {
            let [w, b, gamma, beta] = *ids;
            let skip = x;
            let c = tape.conv2d(x, w, b, self.convs[i].stride, 1)?;
            let bn = match mode {
                Mode::Train => {
                    let (y, stats) = tape.batchnorm_train(c, gamma, beta, self.bn_eps)?;
                    let m = self.bn_momentum;
                    let blk = &mut self.convs[i];
                    for ch in 0..stats.mean.len() {
                        blk.running_mean[ch] =
                            (1.0 - m) * blk.running_mean[ch] + m * stats.mean[ch];
                        blk.running_var[ch] = (1.0 - m) * blk.running_var[ch] + m * stats.var[ch];
                    }
                    y
                }
                Mode::Eval => tape.batchnorm_eval(
                    c,
                    gamma,
                    beta,
                    &self.convs[i].running_mean,
                    &self.convs[i].running_var,
                    self.bn_eps,
                )?,
            };
            let pre_act = if i == RESIDUAL_BLOCK {
                tape.add(bn, skip)?
            } else {
                bn
            };
            x = tape.relu(pre_act);
        }
        let features = tape.global_avg_pool(x);

        let p1 = tape.dense(features, pose1.0, pose1.1)?;
        let p1 = tape.relu(p1);
        let pose = tape.dense(p1, pose2.0, pose2.1)?;

        let v1 = tape.dense(features, val1.0, val1.1)?;
        let v1 = tape.relu(v1);
        let value = tape.dense(v1, val2.0, val2.1)?;

        Ok(ForwardHandles {
            pose,
            value,
            param_ids,
        })
    }

    /// Gradients for every parameter after a backward pass, zeros where a
    /// parameter did not participate.
    pub fn collect_grads(&self, tape: &Tape, handles: &ForwardHandles) -> Vec<Tensor> {
        handles
            .param_ids
            .iter()
            .zip(self.named_params())
            .map(|(&id, (_, p))| match tape.grad(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(&p.shape),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut arrays: Vec<(String, Tensor)> = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        for (i, c) in self.convs.iter().enumerate() {
            arrays.push((
                format!("conv{}.running_mean", i + 1),
                Tensor::from_vec(&[c.running_mean.len()], c.running_mean.clone()),
            ));
            arrays.push((
                format!("conv{}.running_var", i + 1),
                Tensor::from_vec(&[c.running_var.len()], c.running_var.clone()),
            ));
        }
        let refs: Vec<(String, &Tensor)> =
            arrays.iter().map(|(n, t)| (n.clone(), t)).collect();
        save_checkpoint(path, &refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let arrays = load_checkpoint(path)?;
        let mut model = EnforceModel::new(0);
        let lookup = |name: &str| -> Result<&Tensor> {
            arrays
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| CoreError::Checkpoint(format!("missing array {name}")))
        };
        for i in 0..model.convs.len() {
            let idx = i + 1;
            let want_w = model.convs[i].w.shape.clone();
            let w = lookup(&format!("conv{idx}.w"))?;
            if w.shape != want_w {
                return Err(CoreError::Checkpoint(format!(
                    "conv{idx}.w shape {:?}, expected {:?}",
                    w.shape, want_w
                )));
            }
            model.convs[i].w = w.clone();
            model.convs[i].b = lookup(&format!("conv{idx}.b"))?.clone();
            model.convs[i].gamma = lookup(&format!("conv{idx}.gamma"))?.clone();
            model.convs[i].beta = lookup(&format!("conv{idx}.beta"))?.clone();
            model.convs[i].running_mean = lookup(&format!("conv{idx}.running_mean"))?.data.clone();
            model.convs[i].running_var = lookup(&format!("conv{idx}.running_var"))?.data.clone();
        }
        model.pose_fc1 = DenseLayer {
            w: lookup("pose_fc1.w")?.clone(),
            b: lookup("pose_fc1.b")?.clone(),
        };
        model.pose_fc2 = DenseLayer {
            w: lookup("pose_fc2.w")?.clone(),
            b: lookup("pose_fc2.b")?.clone(),
        };
        model.value_fc1 = DenseLayer {
            w: lookup("value_fc1.w")?.clone(),
            b: lookup("value_fc1.b")?.clone(),
        };
        model.value_fc2 = DenseLayer {
            w: lookup("value_fc2.w")?.clone(),
            b: lookup("value_fc2.b")?.clone(),
        };
        Ok(model)
    }
}

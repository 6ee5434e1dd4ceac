//! Reverse-mode differentiation over a per-forward tape.
//!
//! Each op records its output value plus a closure that maps the output
//! gradient to parent gradients; shared parameters accumulate gradients by
//! summation across uses. A tape lives for one forward/backward pass.

use crate::error::{CoreError, Result};
use crate::nn::tensor::{matmul_acc, transpose, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    parents: Vec<NodeId>,
    backward: Option<BackFn>,
}

/// Batch-normalization statistics computed during a train-mode forward.
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance per channel.
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, vec![], None)
    }

    /// A copy of the node's value with the gradient path severed.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id.0].value.clone();
        self.leaf(v, false)
    }

    fn push(
        &mut self,
        value: Tensor,
        requires_grad: bool,
        parents: Vec<NodeId>,
        backward: Option<BackFn>,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            parents,
            backward,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn any_requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Reverse sweep from a scalar root. Verifies every node value and every
    /// produced gradient is finite.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        assert!(self.nodes[root.0].value.is_scalar(), "backward root must be scalar");
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.value.is_finite() {
                return Err(CoreError::NonFinite(format!("forward value at node {i}")));
            }
        }
        let root_shape = self.nodes[root.0].value.shape.clone();
        self.nodes[root.0].grad = Some(Tensor::from_vec(&root_shape, vec![1.0]));
        for i in (0..self.nodes.len()).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad {
                continue;
            }
            let (Some(g), Some(f)) = (&node.grad, &node.backward) else {
                continue;
            };
            let parent_grads = f(g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (pid, pg) in node.parents.iter().zip(parent_grads) {
                if !pg.is_finite() {
                    return Err(CoreError::NonFinite(format!("gradient into node {}", pid.0)));
                }
                let parent = &mut before[pid.0];
                if !parent.requires_grad {
                    continue;
                }
                match &mut parent.grad {
                    Some(acc) => acc.add_assign(&pg),
                    None => parent.grad = Some(pg),
                }
            }
        }
        Ok(())
    }

    // ---- elementwise and reduction ops ----

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).clone();
        let out = Tensor::from_vec(
            &xv.shape,
            xv.data.iter().map(|&v| v.max(0.0)).collect(),
        );
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                vec![Tensor::from_vec(
                    &xv.shape,
                    g.data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                        .collect(),
                )]
            })),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(CoreError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                av.shape, bv.shape
            )));
        }
        let out = Tensor::from_vec(
            &av.shape,
            av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect(),
        );
        let req = self.any_requires(&[a, b]);
        Ok(self.push(
            out,
            req,
            vec![a, b],
            Some(Box::new(move |g| vec![g.clone(), g.clone()])),
        ))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(CoreError::ShapeMismatch(format!(
                "sub: {:?} vs {:?}",
                av.shape, bv.shape
            )));
        }
        let out = Tensor::from_vec(
            &av.shape,
            av.data.iter().zip(&bv.data).map(|(x, y)| x - y).collect(),
        );
        let req = self.any_requires(&[a, b]);
        Ok(self.push(
            out,
            req,
            vec![a, b],
            Some(Box::new(move |g| {
                vec![
                    g.clone(),
                    Tensor::from_vec(&g.shape, g.data.iter().map(|v| -v).collect()),
                ]
            })),
        ))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        if !av.same_shape(&bv) {
            return Err(CoreError::ShapeMismatch(format!(
                "mul: {:?} vs {:?}",
                av.shape, bv.shape
            )));
        }
        let out = Tensor::from_vec(
            &av.shape,
            av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
        );
        let req = self.any_requires(&[a, b]);
        Ok(self.push(
            out,
            req,
            vec![a, b],
            Some(Box::new(move |g| {
                vec![
                    Tensor::from_vec(
                        &g.shape,
                        g.data.iter().zip(&bv.data).map(|(gv, y)| gv * y).collect(),
                    ),
                    Tensor::from_vec(
                        &g.shape,
                        g.data.iter().zip(&av.data).map(|(gv, x)| gv * x).collect(),
                    ),
                ]
            })),
        ))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let xv = self.value(x);
        let out = Tensor::from_vec(&xv.shape, xv.data.iter().map(|v| v * c).collect());
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                vec![Tensor::from_vec(&g.shape, g.data.iter().map(|v| v * c).collect())]
            })),
        )
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).clone();
        let out = Tensor::from_vec(&xv.shape, xv.data.iter().map(|v| v.abs()).collect());
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                // Subgradient 0 at the kink.
                vec![Tensor::from_vec(
                    &xv.shape,
                    g.data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&gv, &v)| gv * if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
                        .collect(),
                )]
            })),
        )
    }

    /// Sum of all elements, scalar output.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let shape = xv.shape.clone();
        let out = Tensor::scalar(xv.data.iter().sum());
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                let gv = g.data[0];
                vec![Tensor::from_vec(
                    &shape,
                    vec![gv; shape.iter().product()],
                )]
            })),
        )
    }

    /// Mean of all elements, scalar output.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.numel(), shape.iter().product::<usize>());
        let old_shape = xv.shape.clone();
        let out = Tensor::from_vec(shape, xv.data.clone());
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                vec![Tensor::from_vec(&old_shape, g.data.clone())]
            })),
        )
    }

    /// Column slice of a [N, F] matrix: columns [start, start+len).
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 2);
        let (n, f) = (xv.shape[0], xv.shape[1]);
        assert!(start + len <= f);
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&xv.data[i * f + start..i * f + start + len]);
        }
        let out = Tensor::from_vec(&[n, len], data);
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                let mut pg = vec![0.0; n * f];
                for i in 0..n {
                    pg[i * f + start..i * f + start + len]
                        .copy_from_slice(&g.data[i * len..(i + 1) * len]);
                }
                vec![Tensor::from_vec(&[n, f], pg)]
            })),
        )
    }

    /// Per-row Euclidean norm of a [N, K] matrix -> [N]. Zero rows get a zero
    /// subgradient.
    pub fn rows_norm(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).clone();
        assert_eq!(xv.shape.len(), 2);
        let (n, k) = (xv.shape[0], xv.shape[1]);
        let norms: Vec<f64> = (0..n)
            .map(|i| xv.data[i * k..(i + 1) * k].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::from_vec(&[n], norms.clone());
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                let mut pg = vec![0.0; n * k];
                for i in 0..n {
                    if norms[i] > 0.0 {
                        let s = g.data[i] / norms[i];
                        for j in 0..k {
                            pg[i * k + j] = s * xv.data[i * k + j];
                        }
                    }
                }
                vec![Tensor::from_vec(&[n, k], pg)]
            })),
        )
    }

    // ---- layers ----

    /// Cross-correlation of NCHW input with OIHW weights.
    /// Output spatial size: (H + 2p - k) / s + 1, floored.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = self.value(b).clone();
        if xv.shape.len() != 4 || wv.shape.len() != 4 {
            return Err(CoreError::ShapeMismatch("conv2d expects 4D x and w".into()));
        }
        let (n, c, h, wd) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let (oc, ic, kh, kw) = (wv.shape[0], wv.shape[1], wv.shape[2], wv.shape[3]);
        if ic != c || bv.shape != vec![oc] {
            return Err(CoreError::ShapeMismatch(format!(
                "conv2d: x channels {c}, w in-channels {ic}, bias {:?}",
                bv.shape
            )));
        }
        if h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(CoreError::ShapeMismatch("conv2d: kernel larger than padded input".into()));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (wd + 2 * padding - kw) / stride + 1;
        let ckk = c * kh * kw;
        let osp = oh * ow;

        let im2col = move |img: &[f64]| -> Vec<f64> {
            let mut col = vec![0.0; ckk * osp];
            for cc in 0..c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = (cc * kh + ky) * kw + kx;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                col[row * osp + oy * ow + ox] =
                                    img[(cc * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                }
            }
            col
        };

        let mut out = vec![0.0; n * oc * osp];
        for ni in 0..n {
            let col = im2col(&xv.data[ni * c * h * wd..(ni + 1) * c * h * wd]);
            let dst = &mut out[ni * oc * osp..(ni + 1) * oc * osp];
            matmul_acc(&wv.data, &col, oc, ckk, osp, dst);
            for o in 0..oc {
                let bias = bv.data[o];
                for v in &mut dst[o * osp..(o + 1) * osp] {
                    *v += bias;
                }
            }
        }
        let out = Tensor::from_vec(&[n, oc, oh, ow], out);
        let req = self.any_requires(&[x, w, b]);
        Ok(self.push(
            out,
            req,
            vec![x, w, b],
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; n * c * h * wd];
                let mut dw = vec![0.0; oc * ckk];
                let mut db = vec![0.0; oc];
                let wt = transpose(&wv.data, oc, ckk);
                for ni in 0..n {
                    let gout = &g.data[ni * oc * osp..(ni + 1) * oc * osp];
                    // dW += gout * col^T
                    let col = im2col(&xv.data[ni * c * h * wd..(ni + 1) * c * h * wd]);
                    let colt = transpose(&col, ckk, osp);
                    matmul_acc(gout, &colt, oc, osp, ckk, &mut dw);
                    // db += row sums of gout
                    for o in 0..oc {
                        db[o] += gout[o * osp..(o + 1) * osp].iter().sum::<f64>();
                    }
                    // dcol = w^T * gout, then scatter back (col2im).
                    let mut dcol = vec![0.0; ckk * osp];
                    matmul_acc(&wt, gout, ckk, oc, osp, &mut dcol);
                    let dimg = &mut dx[ni * c * h * wd..(ni + 1) * c * h * wd];
                    for cc in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let row = (cc * kh + ky) * kw + kx;
                                for oy in 0..oh {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for ox in 0..ow {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        dimg[(cc * h + iy as usize) * wd + ix as usize] +=
                                            dcol[row * osp + oy * ow + ox];
                                    }
                                }
                            }
                        }
                    }
                }
                vec![
                    Tensor::from_vec(&[n, c, h, wd], dx),
                    Tensor::from_vec(&[oc, c, kh, kw], dw),
                    Tensor::from_vec(&[oc], db),
                ]
            })),
        ))
    }

    /// Train-mode batch normalization over batch and spatial dims per
    /// channel; returns the batch statistics so the caller can update its
    /// running averages. Requires batch size >= 2.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<(NodeId, BatchStats)> {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        if xv.shape.len() != 4 {
            return Err(CoreError::ShapeMismatch("batchnorm expects NCHW".into()));
        }
        let (n, c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        if n < 2 {
            return Err(CoreError::BatchTooSmall(n));
        }
        if gv.shape != vec![c] || bv.shape != vec![c] {
            return Err(CoreError::ShapeMismatch("batchnorm gamma/beta shape".into()));
        }
        let m = (n * h * w) as f64;
        let sp = h * w;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for cc in 0..c {
            let mut s = 0.0;
            for ni in 0..n {
                s += xv.data[(ni * c + cc) * sp..(ni * c + cc + 1) * sp].iter().sum::<f64>();
            }
            mean[cc] = s / m;
            let mut v = 0.0;
            for ni in 0..n {
                for &e in &xv.data[(ni * c + cc) * sp..(ni * c + cc + 1) * sp] {
                    v += (e - mean[cc]) * (e - mean[cc]);
                }
            }
            var[cc] = v / m;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xv.numel()];
        let mut out = vec![0.0; xv.numel()];
        for ni in 0..n {
            for cc in 0..c {
                let base = (ni * c + cc) * sp;
                for j in 0..sp {
                    let xh = (xv.data[base + j] - mean[cc]) * inv_std[cc];
                    xhat[base + j] = xh;
                    out[base + j] = gv.data[cc] * xh + bv.data[cc];
                }
            }
        }
        let stats = BatchStats {
            mean: mean.clone(),
            var: var.clone(),
        };
        let shape = xv.shape.clone();
        let out = Tensor::from_vec(&shape, out);
        let req = self.any_requires(&[x, gamma, beta]);
        let id = self.push(
            out,
            req,
            vec![x, gamma, beta],
            Some(Box::new(move |g| {
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for ni in 0..n {
                    for cc in 0..c {
                        let base = (ni * c + cc) * sp;
                        for j in 0..sp {
                            let dy = g.data[base + j];
                            dgamma[cc] += dy * xhat[base + j];
                            dbeta[cc] += dy;
                            sum_dy[cc] += dy;
                            sum_dy_xhat[cc] += dy * xhat[base + j];
                        }
                    }
                }
                let mut dx = vec![0.0; n * c * sp];
                for ni in 0..n {
                    for cc in 0..c {
                        let base = (ni * c + cc) * sp;
                        let k1 = gv.data[cc] * inv_std[cc];
                        for j in 0..sp {
                            let dy = g.data[base + j];
                            dx[base + j] = k1
                                * (dy - sum_dy[cc] / m - xhat[base + j] * sum_dy_xhat[cc] / m);
                        }
                    }
                }
                vec![
                    Tensor::from_vec(&shape, dx),
                    Tensor::from_vec(&[c], dgamma),
                    Tensor::from_vec(&[c], dbeta),
                ]
            })),
        );
        Ok((id, stats))
    }

    /// Eval-mode batch normalization using fixed running statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        if xv.shape.len() != 4 {
            return Err(CoreError::ShapeMismatch("batchnorm expects NCHW".into()));
        }
        let (n, c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        if gv.shape != vec![c] || bv.shape != vec![c] || running_mean.len() != c || running_var.len() != c {
            return Err(CoreError::ShapeMismatch("batchnorm stats shape".into()));
        }
        let sp = h * w;
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let rm = running_mean.to_vec();
        let mut xhat = vec![0.0; xv.numel()];
        let mut out = vec![0.0; xv.numel()];
        for ni in 0..n {
            for cc in 0..c {
                let base = (ni * c + cc) * sp;
                for j in 0..sp {
                    let xh = (xv.data[base + j] - rm[cc]) * inv_std[cc];
                    xhat[base + j] = xh;
                    out[base + j] = gv.data[cc] * xh + bv.data[cc];
                }
            }
        }
        let shape = xv.shape.clone();
        let out = Tensor::from_vec(&shape, out);
        let req = self.any_requires(&[x, gamma, beta]);
        Ok(self.push(
            out,
            req,
            vec![x, gamma, beta],
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; n * c * sp];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ni in 0..n {
                    for cc in 0..c {
                        let base = (ni * c + cc) * sp;
                        for j in 0..sp {
                            let dy = g.data[base + j];
                            dx[base + j] = dy * gv.data[cc] * inv_std[cc];
                            dgamma[cc] += dy * xhat[base + j];
                            dbeta[cc] += dy;
                        }
                    }
                }
                vec![
                    Tensor::from_vec(&shape, dx),
                    Tensor::from_vec(&[c], dgamma),
                    Tensor::from_vec(&[c], dbeta),
                ]
            })),
        ))
    }

    /// Fully connected layer: x [N, F] * w^T [F, O] + b -> [N, O].
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let bv = self.value(b).clone();
        if xv.shape.len() != 2 || wv.shape.len() != 2 {
            return Err(CoreError::ShapeMismatch("dense expects 2D x and w".into()));
        }
        let (n, f) = (xv.shape[0], xv.shape[1]);
        let (o, fw) = (wv.shape[0], wv.shape[1]);
        if f != fw || bv.shape != vec![o] {
            return Err(CoreError::ShapeMismatch(format!(
                "dense: x {:?}, w {:?}, b {:?}",
                xv.shape, wv.shape, bv.shape
            )));
        }
        let wt = transpose(&wv.data, o, f);
        let mut out = vec![0.0; n * o];
        matmul_acc(&xv.data, &wt, n, f, o, &mut out);
        for i in 0..n {
            for j in 0..o {
                out[i * o + j] += bv.data[j];
            }
        }
        let out = Tensor::from_vec(&[n, o], out);
        let req = self.any_requires(&[x, w, b]);
        Ok(self.push(
            out,
            req,
            vec![x, w, b],
            Some(Box::new(move |g| {
                // dx = g * w ; dw = g^T * x ; db = column sums of g
                let mut dx = vec![0.0; n * f];
                matmul_acc(&g.data, &wv.data, n, o, f, &mut dx);
                let gt = transpose(&g.data, n, o);
                let mut dw = vec![0.0; o * f];
                matmul_acc(&gt, &xv.data, o, n, f, &mut dw);
                let mut db = vec![0.0; o];
                for i in 0..n {
                    for j in 0..o {
                        db[j] += g.data[i * o + j];
                    }
                }
                vec![
                    Tensor::from_vec(&[n, f], dx),
                    Tensor::from_vec(&[o, f], dw),
                    Tensor::from_vec(&[o], db),
                ]
            })),
        ))
    }

    /// [N, C, H, W] -> [N, C] spatial mean.
    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 4);
        let (n, c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let sp = h * w;
        let mut out = vec![0.0; n * c];
        for ni in 0..n {
            for cc in 0..c {
                out[ni * c + cc] =
                    xv.data[(ni * c + cc) * sp..(ni * c + cc + 1) * sp].iter().sum::<f64>()
                        / sp as f64;
            }
        }
        let out = Tensor::from_vec(&[n, c], out);
        let req = self.any_requires(&[x]);
        self.push(
            out,
            req,
            vec![x],
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; n * c * sp];
                for ni in 0..n {
                    for cc in 0..c {
                        let gv = g.data[ni * c + cc] / sp as f64;
                        for j in 0..sp {
                            dx[(ni * c + cc) * sp + j] = gv;
                        }
                    }
                }
                vec![Tensor::from_vec(&[n, c, h, w], dx)]
            })),
        )
    }
}

/// Naive 6-loop convolution reference.
pub fn conv_reference(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oc, _, kh, kw) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (wd + 2 * padding - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, oc, oh, ow]);
    for ni in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data[o];
                    for cc in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data[((o * c + cc) * kh + ky) * kw + kx]
                                    * x.data
                                        [((ni * c + cc) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out.data[((ni * oc + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(
            shape,
            (0..shape.iter().product::<usize>())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }

    #[test]
    fn sum_grad_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[4], vec![1.0, -2.0, 3.0, 0.5]), true);
        let s = tape.sum_all(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![1.0; 4]);
    }

    #[test]
    fn elementwise_square_grad() {
        let mut tape = Tape::new();
        let xv = vec![1.0, -2.0, 3.0];
        let x = tape.leaf(Tensor::from_vec(&[3], xv.clone()), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        tape.backward(s).unwrap();
        let g = tape.grad(x).unwrap();
        for i in 0..3 {
            assert!((g.data[i] - 2.0 * xv[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]), false);
        let w = tape.leaf(Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]), true);
        let b = tape.leaf(Tensor::zeros(&[1]), true);
        let y = tape.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape, vec![1, 1, 1, 1]);
        assert_eq!(tape.value(y).data[0], 9.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xv = random_tensor(&[1, 1, 5, 5], &mut rng);
        let x = tape.leaf(xv.clone(), false);
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let w = tape.leaf(Tensor::from_vec(&[1, 1, 3, 3], kernel), false);
        let b = tape.leaf(Tensor::zeros(&[1]), false);
        let y = tape.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(tape.value(y).data, xv.data);
    }


    #[test]
    fn conv_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(stride, padding) in &[(1usize, 0usize), (1, 1), (2, 1)] {
            let xv = random_tensor(&[1, 2, 5, 5], &mut rng);
            let wv = random_tensor(&[3, 2, 3, 3], &mut rng);
            let bv = random_tensor(&[3], &mut rng);
            let expected = conv_reference(&xv, &wv, &bv, stride, padding);
            let mut tape = Tape::new();
            let x = tape.leaf(xv, false);
            let w = tape.leaf(wv, false);
            let b = tape.leaf(bv, false);
            let y = tape.conv2d(x, w, b, stride, padding).unwrap();
            let got = tape.value(y);
            assert_eq!(got.shape, expected.shape);
            for i in 0..got.numel() {
                assert!((got.data[i] - expected.data[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let xv = random_tensor(&[4, 3, 2, 2], &mut rng);
        let x = tape.leaf(xv, false);
        let gamma = tape.leaf(Tensor::from_vec(&[3], vec![1.0; 3]), false);
        let beta = tape.leaf(Tensor::zeros(&[3]), false);
        let (y, _) = tape.batchnorm_train(x, gamma, beta, 1e-5).unwrap();
        let yv = tape.value(y);
        for cc in 0..3 {
            let mut vals = Vec::new();
            for ni in 0..4 {
                vals.extend_from_slice(&yv.data[(ni * 3 + cc) * 4..(ni * 3 + cc + 1) * 4]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3); // eps shrinks variance slightly
        }
    }

    #[test]
    fn batchnorm_affine_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let xv = random_tensor(&[8, 1, 4, 4], &mut rng);
        let x = tape.leaf(xv, false);
        let gamma = tape.leaf(Tensor::from_vec(&[1], vec![2.0]), false);
        let beta = tape.leaf(Tensor::from_vec(&[1], vec![3.0]), false);
        let (y, _) = tape.batchnorm_train(x, gamma, beta, 1e-8).unwrap();
        let yv = tape.value(y);
        let mean: f64 = yv.data.iter().sum::<f64>() / yv.numel() as f64;
        let var: f64 =
            yv.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / yv.numel() as f64;
        assert!((mean - 3.0).abs() < 1e-6);
        assert!((var.sqrt() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_eval_identity_with_unit_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let xv = random_tensor(&[2, 2, 3, 3], &mut rng);
        let x = tape.leaf(xv.clone(), false);
        let gamma = tape.leaf(Tensor::from_vec(&[2], vec![1.0; 2]), false);
        let beta = tape.leaf(Tensor::zeros(&[2]), false);
        let y = tape
            .batchnorm_eval(x, gamma, beta, &[0.0, 0.0], &[1.0, 1.0], 1e-12)
            .unwrap();
        let yv = tape.value(y);
        for i in 0..xv.numel() {
            assert!((yv.data[i] - xv.data[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn batchnorm_rejects_batch_of_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2, 3, 3]), false);
        let gamma = tape.leaf(Tensor::from_vec(&[2], vec![1.0; 2]), false);
        let beta = tape.leaf(Tensor::zeros(&[2]), false);
        assert!(matches!(
            tape.batchnorm_train(x, gamma, beta, 1e-5),
            Err(CoreError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn shared_parameter_grads_sum() {
        // Duplicating a subgraph and halving the weight matches single use.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wv = random_tensor(&[3, 4], &mut rng);
        let bv = random_tensor(&[3], &mut rng);
        let xv = random_tensor(&[2, 4], &mut rng);

        let run = |dup: bool| -> Tensor {
            let mut tape = Tape::new();
            let x = tape.leaf(xv.clone(), false);
            let w = tape.leaf(wv.clone(), true);
            let b = tape.leaf(bv.clone(), true);
            let y1 = tape.dense(x, w, b).unwrap();
            let loss = if dup {
                let y2 = tape.dense(x, w, b).unwrap();
                let s1 = tape.sum_all(y1);
                let s2 = tape.sum_all(y2);
                let s = tape.add(s1, s2).unwrap();
                tape.scale(s, 0.5)
            } else {
                tape.sum_all(y1)
            };
            tape.backward(loss).unwrap();
            tape.grad(w).unwrap().clone()
        };
        let single = run(false);
        let shared = run(true);
        for i in 0..single.numel() {
            assert!((single.data[i] - shared.data[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonfinite_detected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![1.0, f64::NAN]), true);
        let s = tape.sum_all(x);
        assert!(matches!(tape.backward(s), Err(CoreError::NonFinite(_))));
    }
}

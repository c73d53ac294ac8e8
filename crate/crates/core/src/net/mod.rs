//! Softmax policy network with hand-rolled forward/backward passes.
//!
//! Two architectures: a one-hidden-layer perceptron for compact grid
//! observations and a two-conv-layer network for 84x84 RGB images. All math
//! is f64. The last rectified hidden layer doubles as the source of learned
//! boolean features, so forward passes always expose it.

mod optim;

pub use optim::RmsProp;

use crate::env::Observation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {msg}")]
    InvalidArch { msg: String },
    #[error("observation does not match network input: {msg}")]
    ShapeMismatch { msg: String },
    #[error("temperature must be positive and finite, got {tau}")]
    BadTemperature { tau: f64 },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("non-finite gradient, update aborted")]
    NonFiniteGradient,
    #[error("invalid optimizer parameter: {msg}")]
    BadOptimizer { msg: String },
    #[error("invalid training batch: {msg}")]
    BadBatch { msg: String },
    #[error("bad checkpoint: {msg}")]
    BadCheckpoint { msg: String },
}

/// Fixed topology of the image network.
const C1_FILTERS: usize = 16;
const C1_KERNEL: usize = 8;
const C1_STRIDE: usize = 4;
const C2_FILTERS: usize = 32;
const C2_KERNEL: usize = 4;
const C2_STRIDE: usize = 2;
const CONV_FC: usize = 256;

/// Network shape descriptor. The value head exists only for the PUCT
/// baseline; its scalar output is squashed by tanh to match discounted
/// episode returns in [-1, 1].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    /// dense(hidden, relu) -> dense(actions) over a flat input.
    Mlp { input: usize, hidden: usize, actions: usize, value_head: bool },
    /// conv(16, 8x8, stride 4, relu) -> conv(32, 4x4, stride 2, relu)
    /// -> dense(256, relu) -> dense(actions) over an RGB image.
    Conv { height: usize, width: usize, channels: usize, actions: usize, value_head: bool },
}

impl Arch {
    pub fn actions(&self) -> usize {
        match *self {
            Arch::Mlp { actions, .. } | Arch::Conv { actions, .. } => actions,
        }
    }

    pub fn value_head(&self) -> bool {
        match *self {
            Arch::Mlp { value_head, .. } | Arch::Conv { value_head, .. } => value_head,
        }
    }

    /// Width of the last rectified hidden layer (the learned feature layer).
    pub fn hidden_width(&self) -> usize {
        match *self {
            Arch::Mlp { hidden, .. } => hidden,
            Arch::Conv { .. } => CONV_FC,
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        let bad = |msg: String| Err(NetError::InvalidArch { msg });
        match *self {
            Arch::Mlp { input, hidden, actions, .. } => {
                if input == 0 || hidden == 0 || actions == 0 {
                    return bad(format!("zero-sized mlp dimension ({input}, {hidden}, {actions})"));
                }
            }
            Arch::Conv { height, width, channels, actions, .. } => {
                if channels == 0 || actions == 0 {
                    return bad(format!("zero-sized conv dimension ({channels} channels, {actions} actions)"));
                }
                ConvDims::new(height, width, channels)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    ic: usize,
    iw: usize,
    h1: usize,
    w1: usize,
    h2: usize,
    w2: usize,
    flat: usize,
}

impl ConvDims {
    fn new(ih: usize, iw: usize, ic: usize) -> Result<Self, NetError> {
        let out = |n: usize, k: usize, s: usize| -> Option<usize> {
            n.checked_sub(k).map(|d| d / s + 1)
        };
        let (h1, w1) = match (out(ih, C1_KERNEL, C1_STRIDE), out(iw, C1_KERNEL, C1_STRIDE)) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(NetError::InvalidArch {
                    msg: format!("image {ih}x{iw} smaller than the first {C1_KERNEL}x{C1_KERNEL} kernel"),
                })
            }
        };
        let (h2, w2) = match (out(h1, C2_KERNEL, C2_STRIDE), out(w1, C2_KERNEL, C2_STRIDE)) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(NetError::InvalidArch {
                    msg: format!("image {ih}x{iw} too small for the second conv layer"),
                })
            }
        };
        Ok(ConvDims { ic, iw, h1, w1, h2, w2, flat: C2_FILTERS * h2 * w2 })
    }
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    off: usize,
    len: usize,
    weight: bool,
    fan_in: usize,
    fan_out: usize,
}

fn build_segments(arch: &Arch) -> Vec<Seg> {
    let mut segs = Vec::new();
    let mut off = 0;
    let mut push = |len: usize, weight: bool, fan_in: usize, fan_out: usize| {
        segs.push(Seg { off, len, weight, fan_in, fan_out });
        off += len;
    };
    match *arch {
        Arch::Mlp { input, hidden, actions, value_head } => {
            push(hidden * input, true, input, hidden);
            push(hidden, false, 0, 0);
            push(actions * hidden, true, hidden, actions);
            push(actions, false, 0, 0);
            if value_head {
                push(hidden, true, hidden, 1);
                push(1, false, 0, 0);
            }
        }
        Arch::Conv { height, width, channels, actions, value_head } => {
            let d = ConvDims::new(height, width, channels).expect("validated arch");
            let k1 = C1_KERNEL * C1_KERNEL;
            let k2 = C2_KERNEL * C2_KERNEL;
            push(C1_FILTERS * channels * k1, true, channels * k1, C1_FILTERS * k1);
            push(C1_FILTERS, false, 0, 0);
            push(C2_FILTERS * C1_FILTERS * k2, true, C1_FILTERS * k2, C2_FILTERS * k2);
            push(C2_FILTERS, false, 0, 0);
            push(CONV_FC * d.flat, true, d.flat, CONV_FC);
            push(CONV_FC, false, 0, 0);
            push(actions * CONV_FC, true, CONV_FC, actions);
            push(actions, false, 0, 0);
            if value_head {
                push(CONV_FC, true, CONV_FC, 1);
                push(1, false, 0, 0);
            }
        }
    }
    segs
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    pub logits: Vec<f64>,
    /// Last rectified hidden layer, for learned-feature binarization.
    pub hidden: Vec<f64>,
    pub value: Option<f64>,
}

/// One training example. `value_target` must be present exactly when the
/// network has a value head.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub obs: &'a Observation,
    pub target: &'a [f64],
    pub value_target: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    arch: Arch,
    params: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Network {
    arch: Arch,
    segs: Vec<Seg>,
    params: Vec<f64>,
}

enum Trace {
    Mlp { x: Vec<f64>, z1: Vec<f64>, h1: Vec<f64> },
    Conv { x: Vec<f64>, act1: Vec<f64>, pre1: Vec<f64>, pre2: Vec<f64>, act2: Vec<f64>, z3: Vec<f64>, h3: Vec<f64> },
}

impl Network {
    /// Creates a network with uniform(-a, a) weights, a = sqrt(6 / (fan_in +
    /// fan_out)) per layer, and zero biases. Value-output weights are scaled
    /// down so an untrained network ranks actions by its prior rather than by
    /// value noise.
    pub fn new(arch: Arch, rng: &mut impl rand::Rng) -> Result<Self, NetError> {
        arch.validate()?;
        let segs = build_segments(&arch);
        let value_weight_seg = match arch {
            Arch::Mlp { value_head: true, .. } | Arch::Conv { value_head: true, .. } => {
                Some(segs.len() - 2)
            }
            _ => None,
        };
        let total: usize = segs.iter().map(|s| s.len).sum();
        let mut params = vec![0.0; total];
        for (i, seg) in segs.iter().enumerate() {
            if seg.weight {
                let a = (6.0 / (seg.fan_in + seg.fan_out) as f64).sqrt();
                let scale = if Some(i) == value_weight_seg { 0.01 } else { 1.0 };
                for p in &mut params[seg.off..seg.off + seg.len] {
                    *p = (rng.random::<f64>() * 2.0 * a - a) * scale;
                }
            }
        }
        Ok(Network { arch, segs, params })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn num_actions(&self) -> usize {
        self.arch.actions()
    }

    pub fn hidden_width(&self) -> usize {
        self.arch.hidden_width()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn seg(&self, i: usize) -> &[f64] {
        let s = self.segs[i];
        &self.params[s.off..s.off + s.len]
    }

    /// Converts an observation to this network's input layout, validating
    /// shape. Mlp: flat [0,1] values. Conv: channel-first image planes / 255.
    fn input_vec(&self, obs: &Observation) -> Result<Vec<f64>, NetError> {
        match (&self.arch, obs) {
            (Arch::Mlp { input, .. }, _) => {
                let v = obs.to_input();
                if v.len() != *input {
                    return Err(NetError::ShapeMismatch {
                        msg: format!("flat input of {} values, network expects {input}", v.len()),
                    });
                }
                Ok(v)
            }
            (
                Arch::Conv { height, width, channels, .. },
                Observation::Image { height: oh, width: ow, data },
            ) => {
                if oh != height || ow != width || data.len() != height * width * channels {
                    return Err(NetError::ShapeMismatch {
                        msg: format!("image {oh}x{ow}, network expects {height}x{width}x{channels}"),
                    });
                }
                let (h, w, c) = (*height, *width, *channels);
                let mut x = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            x[(ch * h + y) * w + xx] = f64::from(data[(y * w + xx) * c + ch]) / 255.0;
                        }
                    }
                }
                Ok(x)
            }
            (Arch::Conv { .. }, Observation::Compact { .. }) => Err(NetError::ShapeMismatch {
                msg: "conv network needs an image observation".into(),
            }),
        }
    }

    fn forward_trace(&self, obs: &Observation) -> Result<(Trace, Vec<f64>, Option<f64>), NetError> {
        match &self.arch {
            Arch::Mlp { input, hidden, actions, value_head } => {
                let x = self.input_vec(obs)?;
                let mut z1 = vec![0.0; *hidden];
                dense_forward(self.seg(0), self.seg(1), &x, *hidden, *input, &mut z1);
                let h1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
                let mut logits = vec![0.0; *actions];
                dense_forward(self.seg(2), self.seg(3), &h1, *actions, *hidden, &mut logits);
                let v_pre = value_head.then(|| {
                    let mut v = [0.0];
                    dense_forward(self.seg(4), self.seg(5), &h1, 1, *hidden, &mut v);
                    v[0]
                });
                Ok((Trace::Mlp { x, z1, h1 }, logits, v_pre))
            }
            Arch::Conv { height, width, channels, actions, value_head } => {
                let d = ConvDims::new(*height, *width, *channels).expect("validated arch");
                let x = self.input_vec(obs)?;
                let mut pre1 = vec![0.0; C1_FILTERS * d.h1 * d.w1];
                conv_forward(&x, d.ic, d.iw, self.seg(0), self.seg(1), C1_FILTERS, C1_KERNEL, C1_STRIDE, d.h1, d.w1, &mut pre1);
                let act1: Vec<f64> = pre1.iter().map(|&z| z.max(0.0)).collect();
                let mut pre2 = vec![0.0; C2_FILTERS * d.h2 * d.w2];
                conv_forward(&act1, C1_FILTERS, d.w1, self.seg(2), self.seg(3), C2_FILTERS, C2_KERNEL, C2_STRIDE, d.h2, d.w2, &mut pre2);
                let act2: Vec<f64> = pre2.iter().map(|&z| z.max(0.0)).collect();
                let mut z3 = vec![0.0; CONV_FC];
                dense_forward(self.seg(4), self.seg(5), &act2, CONV_FC, d.flat, &mut z3);
                let h3: Vec<f64> = z3.iter().map(|&z| z.max(0.0)).collect();
                let mut logits = vec![0.0; *actions];
                dense_forward(self.seg(6), self.seg(7), &h3, *actions, CONV_FC, &mut logits);
                let v_pre = value_head.then(|| {
                    let mut v = [0.0];
                    dense_forward(self.seg(8), self.seg(9), &h3, 1, CONV_FC, &mut v);
                    v[0]
                });
                Ok((Trace::Conv { x, pre1, act1, pre2, act2, z3, h3 }, logits, v_pre))
            }
        }
    }

    /// Deterministic forward pass: identical observations and parameters give
    /// bitwise identical outputs.
    pub fn forward(&self, obs: &Observation) -> Result<NetworkOutput, NetError> {
        let (trace, logits, v_pre) = self.forward_trace(obs)?;
        let hidden = match trace {
            Trace::Mlp { h1, .. } => h1,
            Trace::Conv { h3, .. } => h3,
        };
        Ok(NetworkOutput { logits, hidden, value: v_pre.map(f64::tanh) })
    }

    /// Mean cross-entropy of the softmax policy against the targets, plus
    /// `value_loss_factor * mean (z - v)^2` when a value head is present,
    /// plus `l2 * sum of squared weights` (biases excluded). Returns the loss
    /// and the gradient of the loss for every parameter.
    pub fn loss_and_grads(
        &self,
        batch: &[TrainSample<'_>],
        l2: f64,
        value_loss_factor: f64,
    ) -> Result<(f64, Vec<f64>), NetError> {
        if batch.is_empty() {
            return Err(NetError::BadBatch { msg: "empty batch".into() });
        }
        let actions = self.arch.actions();
        let inv_b = 1.0 / batch.len() as f64;
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;

        for (i, sample) in batch.iter().enumerate() {
            if sample.target.len() != actions {
                return Err(NetError::BadBatch {
                    msg: format!("sample {i}: target has {} entries, expected {actions}", sample.target.len()),
                });
            }
            let sum: f64 = sample.target.iter().sum();
            if sample.target.iter().any(|t| !t.is_finite() || *t < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(NetError::BadBatch {
                    msg: format!("sample {i}: target is not a probability vector"),
                });
            }
            if sample.value_target.is_some() != self.arch.value_head() {
                return Err(NetError::BadBatch {
                    msg: format!("sample {i}: value target presence does not match the architecture"),
                });
            }

            let (trace, logits, v_pre) = self.forward_trace(sample.obs)?;
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss -= inv_b
                * sample
                    .target
                    .iter()
                    .zip(&logits)
                    .map(|(t, l)| if *t > 0.0 { t * (l - lse) } else { 0.0 })
                    .sum::<f64>();

            // d mean-CE / d logits = (softmax(logits) - target) / batch.
            let mut dlogits: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
            for (d, t) in dlogits.iter_mut().zip(sample.target) {
                *d = (*d - t) * inv_b;
            }
            let dv_pre = match (v_pre, sample.value_target) {
                (Some(pre), Some(z)) => {
                    let v = pre.tanh();
                    loss += value_loss_factor * (z - v) * (z - v) * inv_b;
                    Some(value_loss_factor * 2.0 * (v - z) * (1.0 - v * v) * inv_b)
                }
                _ => None,
            };
            self.backward(&trace, &dlogits, dv_pre, &mut grads);
        }

        for seg in &self.segs {
            if seg.weight {
                for i in seg.off..seg.off + seg.len {
                    loss += l2 * self.params[i] * self.params[i];
                    grads[i] += 2.0 * l2 * self.params[i];
                }
            }
        }
        Ok((loss, grads))
    }

    fn backward(&self, trace: &Trace, dlogits: &[f64], dv_pre: Option<f64>, grads: &mut [f64]) {
        let seg_at = |i: usize| self.segs[i];
        match (trace, &self.arch) {
            (Trace::Mlp { x, z1, h1 }, Arch::Mlp { hidden, .. }) => {
                let mut dh1 = vec![0.0; *hidden];
                {
                    let (w2, rest) = (seg_at(2), seg_at(3));
                    let (gw2, gb2) = grads_two(grads, w2, rest);
                    dense_backward(self.seg(2), h1, dlogits, gw2, gb2, Some(&mut dh1));
                }
                if let Some(dv) = dv_pre {
                    let (gwv, gbv) = grads_two(grads, seg_at(4), seg_at(5));
                    dense_backward(self.seg(4), h1, &[dv], gwv, gbv, Some(&mut dh1));
                }
                let dz1: Vec<f64> = dh1.iter().zip(z1).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
                let (gw1, gb1) = grads_two(grads, seg_at(0), seg_at(1));
                dense_backward(self.seg(0), x, &dz1, gw1, gb1, None);
                debug_assert_eq!(dh1.len(), *hidden);
            }
            (Trace::Conv { x, pre1, act1, pre2, act2, z3, h3 }, Arch::Conv { height, width, channels, .. }) => {
                let d = ConvDims::new(*height, *width, *channels).expect("validated arch");
                let mut dh3 = vec![0.0; CONV_FC];
                {
                    let (gw4, gb4) = grads_two(grads, seg_at(6), seg_at(7));
                    dense_backward(self.seg(6), h3, dlogits, gw4, gb4, Some(&mut dh3));
                }
                if let Some(dv) = dv_pre {
                    let (gwv, gbv) = grads_two(grads, seg_at(8), seg_at(9));
                    dense_backward(self.seg(8), h3, &[dv], gwv, gbv, Some(&mut dh3));
                }
                let dz3: Vec<f64> = dh3.iter().zip(z3).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
                let mut dact2 = vec![0.0; d.flat];
                {
                    let (gw3, gb3) = grads_two(grads, seg_at(4), seg_at(5));
                    dense_backward(self.seg(4), act2, &dz3, gw3, gb3, Some(&mut dact2));
                }
                let dpre2: Vec<f64> = dact2.iter().zip(pre2).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
                let mut dact1 = vec![0.0; C1_FILTERS * d.h1 * d.w1];
                {
                    let (gk2, gb2) = grads_two(grads, seg_at(2), seg_at(3));
                    conv_backward(act1, C1_FILTERS, d.w1, self.seg(2), C2_FILTERS, C2_KERNEL, C2_STRIDE, d.h2, d.w2, &dpre2, gk2, gb2, Some(&mut dact1));
                }
                let dpre1: Vec<f64> = dact1.iter().zip(pre1).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
                let (gk1, gb1) = grads_two(grads, seg_at(0), seg_at(1));
                conv_backward(x, d.ic, d.iw, self.seg(0), C1_FILTERS, C1_KERNEL, C1_STRIDE, d.h1, d.w1, &dpre1, gk1, gb1, None);
            }
            _ => unreachable!("trace kind always matches the architecture"),
        }
    }

    /// Writes a versioned JSON checkpoint: format version, architecture
    /// descriptor, flat parameter array. f64 values round-trip exactly.
    pub fn save(&self, path: &std::path::Path) -> Result<(), NetError> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            arch: self.arch.clone(),
            params: self.params.clone(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| NetError::BadCheckpoint { msg: e.to_string() })?;
        std::fs::write(path, text).map_err(|e| NetError::BadCheckpoint {
            msg: format!("{}: {e}", path.display()),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetError::BadCheckpoint {
            msg: format!("{}: {e}", path.display()),
        })?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| NetError::BadCheckpoint { msg: e.to_string() })?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(NetError::BadCheckpoint {
                msg: format!("format version {} unsupported, expected {CHECKPOINT_VERSION}", file.format_version),
            });
        }
        file.arch.validate()?;
        let segs = build_segments(&file.arch);
        let total: usize = segs.iter().map(|s| s.len).sum();
        if file.params.len() != total {
            return Err(NetError::BadCheckpoint {
                msg: format!("{} parameters, architecture needs {total}", file.params.len()),
            });
        }
        Ok(Network { arch: file.arch, segs, params: file.params })
    }
}

/// Numerically stable softmax with temperature: exp((l - max) / tau),
/// normalized. Temperature scales before exponentiation, so tau -> infinity
/// approaches the uniform distribution.
pub fn softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>, NetError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(NetError::BadTemperature { tau });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(NetError::NonFiniteLogits);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

fn dense_forward(w: &[f64], b: &[f64], x: &[f64], out_dim: usize, in_dim: usize, out: &mut [f64]) {
    for j in 0..out_dim {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        let mut acc = b[j];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        out[j] = acc;
    }
}

/// Accumulates dW += dout x^T, db += dout, and optionally dx += W^T dout.
fn dense_backward(w: &[f64], x: &[f64], dout: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let in_dim = x.len();
    for (j, &d) in dout.iter().enumerate() {
        db[j] += d;
        let drow = &mut dw[j * in_dim..(j + 1) * in_dim];
        for (g, xv) in drow.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
    if let Some(dx) = dx {
        for (j, &d) in dout.iter().enumerate() {
            let row = &w[j * in_dim..(j + 1) * in_dim];
            for (gx, wv) in dx.iter_mut().zip(row) {
                *gx += d * wv;
            }
        }
    }
}

/// Valid convolution over channel-first planes.
/// `x` is ic planes of ih x iw (ih implied); `pre` gets oc planes of oh x ow.
#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    ic: usize,
    iw: usize,
    w: &[f64],
    b: &[f64],
    oc: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pre: &mut [f64],
) {
    let ih = x.len() / (ic * iw);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o];
                for c in 0..ic {
                    let plane = &x[c * ih * iw..(c + 1) * ih * iw];
                    let wbase = ((o * ic) + c) * k * k;
                    for ky in 0..k {
                        let row = (oy * stride + ky) * iw + ox * stride;
                        let wrow = wbase + ky * k;
                        for kx in 0..k {
                            acc += plane[row + kx] * w[wrow + kx];
                        }
                    }
                }
                pre[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

/// Gradients of [`conv_forward`]: accumulates dW, db, and optionally dx.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    ic: usize,
    iw: usize,
    w: &[f64],
    oc: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    dpre: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let ih = x.len() / (ic * iw);
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let d = dpre[(o * oh + oy) * ow + ox];
                if d == 0.0 {
                    continue;
                }
                db[o] += d;
                for c in 0..ic {
                    let plane = &x[c * ih * iw..(c + 1) * ih * iw];
                    let wbase = ((o * ic) + c) * k * k;
                    for ky in 0..k {
                        let row = (oy * stride + ky) * iw + ox * stride;
                        let wrow = wbase + ky * k;
                        for kx in 0..k {
                            dw[wrow + kx] += d * plane[row + kx];
                        }
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let dplane = &mut dx[c * ih * iw..(c + 1) * ih * iw];
                        for ky in 0..k {
                            let row = (oy * stride + ky) * iw + ox * stride;
                            let wrow = wbase + ky * k;
                            for kx in 0..k {
                                dplane[row + kx] += d * w[wrow + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Splits the flat gradient buffer into two disjoint segment views.
fn grads_two<'a>(grads: &'a mut [f64], a: Seg, b: Seg) -> (&'a mut [f64], &'a mut [f64]) {
    assert!(a.off + a.len <= b.off);
    let (left, right) = grads.split_at_mut(b.off);
    (&mut left[a.off..a.off + a.len], &mut right[..b.len])
}

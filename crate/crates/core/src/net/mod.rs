//! The TDNN embedding network with statistics pooling, and its exact
//! backward pass.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::features::FeatureMatrix;
use crate::linalg::gemm;
use crate::{Error, Result};

mod arch;

pub use arch::{Architecture, LayerKind, LayerSpec};

pub const BN_EPSILON: f64 = 1e-5;
pub const POOL_EPSILON: f64 = 1e-10;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses minibatch statistics.
    Train,
    /// Batch norm uses running statistics.
    Infer,
}

/// Weights of one TDNN or FC layer. `weight` is `fan_in x out_dim`, with the
/// block for context offset `c` in rows `c * in_dim .. (c + 1) * in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AffineGrads {
    fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weight: vec![0.0; spec.fan_in() * spec.out_dim],
            bias: vec![0.0; spec.out_dim],
            gamma: vec![0.0; spec.out_dim],
            beta: vec![0.0; spec.out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: Architecture,
    /// One entry per affine layer, in order (pooling has no parameters).
    pub layers: Vec<AffineParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<AffineGrads>,
}

impl NetGrads {
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|g| {
            [g.weight.as_slice(), g.bias.as_slice(), g.gamma.as_slice(), g.beta.as_slice()]
        })
    }
}

impl NetParams {
    /// Uniform weights in `±1/sqrt(fan_in)`, zero bias, `gamma = 1`,
    /// `beta = 0`, running mean 0 and running variance 1.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layers
            .iter()
            .filter(|l| l.is_affine())
            .map(|l| {
                let s = 1.0 / libm::sqrt(l.fan_in() as f64);
                AffineParams {
                    weight: (0..l.fan_in() * l.out_dim).map(|_| rng.random_range(-s..s)).collect(),
                    bias: vec![0.0; l.out_dim],
                    gamma: vec![1.0; l.out_dim],
                    beta: vec![0.0; l.out_dim],
                    running_mean: vec![0.0; l.out_dim],
                    running_var: vec![1.0; l.out_dim],
                }
            })
            .collect();
        Ok(Self { arch, layers })
    }

    /// Trainable parameters, in the same order as [`NetGrads::slices`].
    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|p| {
            [
                p.weight.as_mut_slice(),
                p.bias.as_mut_slice(),
                p.gamma.as_mut_slice(),
                p.beta.as_mut_slice(),
            ]
        })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|p| p.weight.len() + 3 * p.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|p| {
            [&p.weight, &p.bias, &p.gamma, &p.beta, &p.running_mean, &p.running_var]
                .iter()
                .all(|v| crate::linalg::is_finite(v))
        })
    }

    /// `running = momentum * running + (1 - momentum) * batch` using the
    /// minibatch statistics recorded by a train-mode forward.
    pub fn update_running_stats(&mut self, tape: &ForwardTape, momentum: f64) {
        for (p, t) in self.layers.iter_mut().zip(tape.layers.iter().filter_map(LayerTape::affine)) {
            for d in 0..p.running_mean.len() {
                p.running_mean[d] = momentum * p.running_mean[d] + (1.0 - momentum) * t.mean[d];
                p.running_var[d] = momentum * p.running_var[d] + (1.0 - momentum) * t.var[d];
            }
        }
    }
}

/// A batch of variable-length sequences stored back to back, `dim` columns.
#[derive(Debug, Clone, PartialEq)]
struct Seq {
    data: Vec<f64>,
    lens: Vec<usize>,
    dim: usize,
}

impl Seq {
    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.lens
            .iter()
            .map(|l| {
                let o = acc;
                acc += l;
                o
            })
            .collect()
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineTape {
    relu: bool,
    input: Seq,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Minibatch statistics (train mode) or the running ones (infer mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerTape {
    Affine(AffineTape),
    Pooling(PoolTape),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolTape {
    input: Seq,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl LayerTape {
    fn affine(&self) -> Option<&AffineTape> {
        match self {
            LayerTape::Affine(t) => Some(t),
            LayerTape::Pooling(_) => None,
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub mode: Mode,
    pub layers: Vec<LayerTape>,
    /// Frame counts entering each layer, per sample.
    pub frames: Vec<Vec<usize>>,
}

impl ForwardTape {
    /// Which ReLU units were active, over every ReLU layer of the batch.
    /// Finite-difference checks use it to spot kinks inside the stencil.
    pub fn relu_pattern(&self, params: &NetParams) -> Vec<bool> {
        let mut out = Vec::new();
        for (p, t) in params.layers.iter().zip(self.layers.iter().filter_map(LayerTape::affine)) {
            if !t.relu {
                continue;
            }
            let d = p.gamma.len();
            for row in t.xhat.chunks_exact(d) {
                out.extend((0..d).map(|k| p.gamma[k] * row[k] + p.beta[k] >= 0.0));
            }
        }
        out
    }
}

/// Pooled mean and `sqrt(var + POOL_EPSILON)` per sample of `x`.
fn pool(x: &Seq) -> (Vec<f64>, Vec<f64>) {
    let d = x.dim;
    let mut mean = vec![0.0; x.lens.len() * d];
    let mut std = vec![0.0; x.lens.len() * d];
    for (s, (&len, off)) in x.lens.iter().zip(x.offsets()).enumerate() {
        let rows = &x.data[off * d..(off + len) * d];
        let m = &mut mean[s * d..(s + 1) * d];
        for row in rows.chunks_exact(d) {
            m.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        let inv = 1.0 / len as f64;
        m.iter_mut().for_each(|a| *a *= inv);
        let sd = &mut std[s * d..(s + 1) * d];
        for row in rows.chunks_exact(d) {
            for k in 0..d {
                let c = row[k] - m[k];
                sd[k] += c * c;
            }
        }
        sd.iter_mut().for_each(|v| *v = libm::sqrt(*v * inv + POOL_EPSILON));
    }
    (mean, std)
}

/// Splice-and-multiply: `z_s[t] = bias + sum_c x_s[t + c - c0] W_c`.
fn affine_forward(spec: &LayerSpec, p: &AffineParams, x: &Seq) -> Result<(Vec<usize>, Vec<f64>)> {
    let (din, dout, span) = (spec.in_dim, spec.out_dim, spec.span());
    let out_lens: Vec<usize> = x
        .lens
        .iter()
        .map(|&l| {
            if l > span {
                Ok(l - span)
            } else {
                Err(Error::UtteranceTooShort { frames: l, needed: span + 1 })
            }
        })
        .collect::<Result<_>>()?;
    let total: usize = out_lens.iter().sum();
    let mut z = Vec::with_capacity(total * dout);
    for _ in 0..total {
        z.extend_from_slice(&p.bias);
    }
    let c0 = spec.context[0];
    let mut out_off = 0;
    for (&tout, in_off) in out_lens.iter().zip(x.offsets()) {
        for (ci, &c) in spec.context.iter().enumerate() {
            let shift = (c - c0) as usize;
            gemm(
                tout,
                din,
                dout,
                &x.data[(in_off + shift) * din..],
                din,
                1,
                &p.weight[ci * din * dout..(ci + 1) * din * dout],
                dout,
                1,
                1.0,
                &mut z[out_off * dout..(out_off + tout) * dout],
                dout,
            );
        }
        out_off += tout;
    }
    Ok((out_lens, z))
}

/// Runs the network on a batch of `T_s x input_dim` matrices and returns the
/// `N x embed_dim` embeddings. Pure: running statistics are not touched.
pub fn forward_batch(
    params: &NetParams,
    inputs: &[&[f64]],
    mode: Mode,
) -> Result<(Vec<f64>, ForwardTape)> {
    forward_impl(params, inputs, mode, true).map(|(e, t)| (e, t.expect("tape requested")))
}

fn forward_impl(
    params: &NetParams,
    inputs: &[&[f64]],
    mode: Mode,
    keep_tape: bool,
) -> Result<(Vec<f64>, Option<ForwardTape>)> {
    let arch = &params.arch;
    let din = arch.input_dim();
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut lens = Vec::with_capacity(inputs.len());
    let mut data = Vec::with_capacity(inputs.iter().map(|x| x.len()).sum());
    let min = arch.min_frames();
    for x in inputs {
        if x.len() % din != 0 {
            return Err(Error::DimensionMismatch { expected: din, found: x.len() % din });
        }
        let t = x.len() / din;
        if t < min {
            return Err(Error::UtteranceTooShort { frames: t, needed: min });
        }
        lens.push(t);
        data.extend_from_slice(x);
    }
    let mut x = Seq { data, lens, dim: din };
    let mut tapes = Vec::new();
    let mut frames = Vec::new();
    let mut affine = params.layers.iter();
    for spec in &arch.layers {
        frames.push(x.lens.clone());
        if spec.kind == LayerKind::Pooling {
            let (mean, std) = pool(&x);
            let n = x.lens.len();
            let d = x.dim;
            let mut out = vec![0.0; n * 2 * d];
            for s in 0..n {
                out[s * 2 * d..s * 2 * d + d].copy_from_slice(&mean[s * d..(s + 1) * d]);
                out[s * 2 * d + d..(s + 1) * 2 * d].copy_from_slice(&std[s * d..(s + 1) * d]);
            }
            let next = Seq { data: out, lens: vec![1; n], dim: 2 * d };
            if keep_tape {
                tapes.push(LayerTape::Pooling(PoolTape { input: x, mean, std }));
            }
            x = next;
            continue;
        }
        let p = affine.next().ok_or(Error::InvalidArchitecture("missing layer parameters".into()))?;
        let (out_lens, z) = affine_forward(spec, p, &x)?;
        let dout = spec.out_dim;
        let rows = out_lens.iter().sum::<usize>();
        let (mean, var) = match mode {
            Mode::Train => batch_stats(&z, rows, dout),
            Mode::Infer => (p.running_mean.clone(), p.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPSILON)).collect();
        let mut xhat = z;
        for row in xhat.chunks_exact_mut(dout) {
            for k in 0..dout {
                row[k] = (row[k] - mean[k]) * inv_std[k];
            }
        }
        let mut y = vec![0.0; xhat.len()];
        for (yr, xr) in y.chunks_exact_mut(dout).zip(xhat.chunks_exact(dout)) {
            for k in 0..dout {
                let v = p.gamma[k] * xr[k] + p.beta[k];
                yr[k] = if spec.relu && v < 0.0 { 0.0 } else { v };
            }
        }
        let next = Seq { data: y, lens: out_lens, dim: dout };
        if keep_tape {
            tapes.push(LayerTape::Affine(AffineTape { relu: spec.relu, input: x, xhat, inv_std, mean, var }));
        }
        x = next;
    }
    let tape = keep_tape.then(|| ForwardTape { mode, layers: tapes, frames });
    Ok((x.data, tape))
}

fn batch_stats(z: &[f64], rows: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; d];
    for row in z.chunks_exact(d) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    let inv = 1.0 / rows as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut var = vec![0.0; d];
    for row in z.chunks_exact(d) {
        for k in 0..d {
            let c = row[k] - mean[k];
            var[k] += c * c;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv);
    (mean, var)
}

/// Gradients of every trainable parameter given `d loss / d embeddings`.
pub fn backward(params: &NetParams, tape: &ForwardTape, grad_embedding: &[f64]) -> NetGrads {
    let arch = &params.arch;
    let mut grads: Vec<AffineGrads> =
        arch.layers.iter().filter(|l| l.is_affine()).map(AffineGrads::zeros).collect();
    let mut g = grad_embedding.to_vec();
    let mut pi = params.layers.len();
    for (li, (spec, lt)) in arch.layers.iter().zip(&tape.layers).enumerate().rev() {
        let first = li == 0;
        match lt {
            LayerTape::Pooling(PoolTape { input, mean, std }) => {
                let d = input.dim;
                let mut gx = vec![0.0; input.data.len()];
                for (s, (&len, off)) in input.lens.iter().zip(input.offsets()).enumerate() {
                    let gm = &g[s * 2 * d..s * 2 * d + d];
                    let gs = &g[s * 2 * d + d..(s + 1) * 2 * d];
                    let inv = 1.0 / len as f64;
                    for t in 0..len {
                        let r = (off + t) * d;
                        for k in 0..d {
                            let c = input.data[r + k] - mean[s * d + k];
                            gx[r + k] = inv * (gm[k] + gs[k] * c / std[s * d + k]);
                        }
                    }
                }
                g = gx;
            }
            LayerTape::Affine(at) => {
                pi -= 1;
                let p = &params.layers[pi];
                let gr = &mut grads[pi];
                g = affine_backward(spec, p, at, tape.mode, g, gr, !first);
            }
        }
    }
    NetGrads { layers: grads }
}

fn affine_backward(
    spec: &LayerSpec,
    p: &AffineParams,
    t: &AffineTape,
    mode: Mode,
    mut g: Vec<f64>,
    gr: &mut AffineGrads,
    want_input_grad: bool,
) -> Vec<f64> {
    let (din, dout) = (spec.in_dim, spec.out_dim);
    let rows = t.xhat.len() / dout;
    // Through the ReLU, then the scale and shift.
    for (gr_row, xr) in g.chunks_exact_mut(dout).zip(t.xhat.chunks_exact(dout)) {
        for k in 0..dout {
            let y = p.gamma[k] * xr[k] + p.beta[k];
            if spec.relu && y < 0.0 {
                gr_row[k] = 0.0;
            }
        }
    }
    let mut sum_g = vec![0.0; dout];
    let mut sum_gx = vec![0.0; dout];
    for (gr_row, xr) in g.chunks_exact(dout).zip(t.xhat.chunks_exact(dout)) {
        for k in 0..dout {
            sum_g[k] += gr_row[k];
            sum_gx[k] += gr_row[k] * xr[k];
        }
    }
    gr.beta.copy_from_slice(&sum_g);
    gr.gamma.copy_from_slice(&sum_gx);
    // Through the normalization: with minibatch statistics the mean and
    // variance depend on every row.
    let inv_m = 1.0 / rows as f64;
    for (gr_row, xr) in g.chunks_exact_mut(dout).zip(t.xhat.chunks_exact(dout)) {
        for k in 0..dout {
            let s = p.gamma[k] * t.inv_std[k];
            gr_row[k] = match mode {
                Mode::Train => s * (gr_row[k] - inv_m * (sum_g[k] + xr[k] * sum_gx[k])),
                Mode::Infer => s * gr_row[k],
            };
        }
    }
    for row in g.chunks_exact(dout) {
        gr.bias.iter_mut().zip(row).for_each(|(b, v)| *b += v);
    }
    let c0 = spec.context[0];
    let out_lens: Vec<usize> = t.input.lens.iter().map(|l| l - spec.span()).collect();
    let mut gx = if want_input_grad { vec![0.0; t.input.data.len()] } else { Vec::new() };
    let mut out_off = 0;
    for (&tout, in_off) in out_lens.iter().zip(t.input.offsets()) {
        let gz = &g[out_off * dout..(out_off + tout) * dout];
        for (ci, &c) in spec.context.iter().enumerate() {
            let shift = (c - c0) as usize;
            let x = &t.input.data[(in_off + shift) * din..];
            let block = ci * din * dout..(ci + 1) * din * dout;
            // dW_c += X_shifted^T gz
            gemm(din, tout, dout, x, 1, din, gz, dout, 1, 1.0, &mut gr.weight[block.clone()], dout);
            if want_input_grad {
                // dX_shifted += gz W_c^T
                gemm(
                    tout,
                    dout,
                    din,
                    gz,
                    dout,
                    1,
                    &p.weight[block],
                    1,
                    dout,
                    1.0,
                    &mut gx[(in_off + shift) * din..(in_off + shift + tout) * din],
                    din,
                );
            }
        }
        out_off += tout;
    }
    gx
}

/// Infer-mode forward over a whole utterance; returns the embedding.
pub fn extract_embedding(params: &NetParams, f: &FeatureMatrix) -> Result<Vec<f64>> {
    embed(params, f.as_slice())
}

/// Infer-mode forward over one `T x input_dim` matrix without keeping a tape.
pub fn embed(params: &NetParams, frames: &[f64]) -> Result<Vec<f64>> {
    forward_impl(params, &[frames], Mode::Infer, false).map(|(e, _)| e)
}

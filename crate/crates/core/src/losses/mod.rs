//! Classifier heads and training criteria.
//!
//! All criteria take a row-major `N x E` embedding matrix and return the mean
//! loss together with its gradient with respect to the embeddings (and the
//! head, when there is one).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{dot, norm};
use crate::{Error, Result};

mod asoftmax;
mod margin;
mod phi;
mod softmax;
mod triplet;

pub use asoftmax::{angle_cache, asoftmax_loss, AngleCache, AngleEntry};
pub use margin::angular_margin;
pub use phi::{chebyshev_t, chebyshev_u, phi, phi_derivative, COS_CLAMP};
pub use softmax::softmax_loss;
pub use triplet::{mine_triplets, triplet_loss, triplet_loss_fixed, Mining, Triplet};

/// Which criterion trains the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Softmax,
    /// Angular-margin softmax with integer margin `m`.
    ASoftmax { m: u32 },
    /// Triplet loss on squared Euclidean distances.
    Triplet { margin: f64, mining: Mining },
}

impl LossKind {
    pub fn has_head(&self) -> bool {
        !matches!(self, LossKind::Triplet { .. })
    }

    pub fn tag(&self) -> u32 {
        match self {
            LossKind::Softmax => 0,
            LossKind::ASoftmax { .. } => 1,
            LossKind::Triplet { .. } => 2,
        }
    }
}

/// Linear classifier over embeddings: rows `W_i` of a `C x E` matrix plus a
/// bias per class. A-softmax ignores the bias and normalizes the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub classes: usize,
    pub dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `N x E` gradient with respect to the embeddings.
    pub grad_x: Vec<f64>,
    pub head: Option<HeadGrads>,
}

impl HeadParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self { classes, dim, weight: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    /// Uniform weights in `±1/sqrt(dim)`, zero bias.
    pub fn random<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / libm::sqrt(dim as f64);
        let weight = (0..classes * dim).map(|_| rng.random_range(-s..s)).collect();
        Self { classes, dim, weight, bias: vec![0.0; classes] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.dim..(i + 1) * self.dim]
    }

    /// Copy with unit-norm rows and zero bias.
    pub fn normalized(&self) -> Result<Self> {
        let mut h = self.clone();
        for i in 0..self.classes {
            let n = norm(self.row(i));
            if n == 0.0 {
                return Err(Error::DegenerateInput("zero head row"));
            }
            h.weight[i * self.dim..(i + 1) * self.dim].iter_mut().for_each(|w| *w /= n);
        }
        h.bias.iter_mut().for_each(|b| *b = 0.0);
        Ok(h)
    }

    /// Class decision for one embedding: `argmax W_i x + b_i` for softmax,
    /// `argmax cos(theta_i)` (the un-margined inference rule) for A-softmax.
    pub fn predict(&self, x: &[f64], kind: LossKind) -> usize {
        let score = |i: usize| match kind {
            LossKind::ASoftmax { .. } => {
                let n = norm(self.row(i));
                if n == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    dot(self.row(i), x) / n
                }
            }
            _ => dot(self.row(i), x) + self.bias[i],
        };
        (0..self.classes).fold(0, |best, i| if score(i) > score(best) { i } else { best })
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    Ok(())
}

pub(crate) fn check_shape(x: &[f64], n: usize, dim: usize) -> Result<()> {
    if x.len() != n * dim {
        return Err(Error::DimensionMismatch { expected: n * dim, found: x.len() });
    }
    Ok(())
}

/// `log sum exp(f) - f[target]` and the softmax probabilities.
pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&f| libm::exp(f - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) + max - logits[target];
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

use alloc::vec;
use alloc::vec::Vec;

use super::{check_labels, check_shape, cross_entropy, phi, phi_derivative, HeadGrads, HeadParams, LossOutput};
use crate::linalg::{dot, norm};
use crate::{Error, Result};

/// Per-sample angle quantities of the A-softmax forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleEntry {
    pub x_norm: f64,
    /// `cos(theta_j)` for every class.
    pub cos: Vec<f64>,
    /// Segment index of the target angle.
    pub k: u32,
    /// `phi(theta_y)`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleCache {
    pub entries: Vec<AngleEntry>,
}

fn row_norms(head: &HeadParams) -> Result<Vec<f64>> {
    (0..head.classes)
        .map(|i| {
            let n = norm(head.row(i));
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::DegenerateInput("zero head row"))
            }
        })
        .collect()
}

pub fn angle_cache(head: &HeadParams, x: &[f64], labels: &[usize], m: u32) -> Result<AngleCache> {
    if m < 1 {
        return Err(Error::InvalidMargin(m));
    }
    let (n, e) = (labels.len(), head.dim);
    check_shape(x, n, e)?;
    check_labels(labels, head.classes)?;
    let w_norm = row_norms(head)?;
    let entries = (0..n)
        .map(|i| {
            let xi = &x[i * e..(i + 1) * e];
            let x_norm = norm(xi);
            if x_norm == 0.0 {
                return Err(Error::DegenerateInput("zero embedding"));
            }
            let cos: Vec<f64> =
                (0..head.classes).map(|j| dot(head.row(j), xi) / (w_norm[j] * x_norm)).collect();
            let (phi, k) = phi(cos[labels[i]], m);
            Ok(AngleEntry { x_norm, cos, k, phi })
        })
        .collect::<Result<_>>()?;
    Ok(AngleCache { entries })
}

/// A-softmax: weight rows are normalized inside the op, biases are ignored,
/// and the target logit `|x| cos(theta_y)` is replaced by `|x| phi(theta_y)`.
///
/// With `anneal_lambda > 0` the target logit becomes
/// `|x| (lambda cos(theta_y) + phi(theta_y)) / (1 + lambda)`. Gradients flow
/// through the row normalization back to the raw weights.
pub fn asoftmax_loss(
    head: &HeadParams,
    x: &[f64],
    labels: &[usize],
    m: u32,
    anneal_lambda: f64,
) -> Result<LossOutput> {
    if !(anneal_lambda >= 0.0) {
        return Err(Error::InvalidConfig("anneal lambda must be >= 0".into()));
    }
    let cache = angle_cache(head, x, labels, m)?;
    let (n, c, e) = (labels.len(), head.classes, head.dim);
    let w_norm = row_norms(head)?;
    let scale = 1.0 / n as f64;
    let blend = 1.0 / (1.0 + anneal_lambda);
    let mut grad_x = vec![0.0; n * e];
    // Gradient with respect to the normalized rows, projected at the end.
    let mut grad_w_hat = vec![0.0; c * e];
    let mut loss = 0.0;
    let mut logits = vec![0.0; c];
    for (i, entry) in cache.entries.iter().enumerate() {
        let y = labels[i];
        let xi = &x[i * e..(i + 1) * e];
        let target = (anneal_lambda * entry.cos[y] + entry.phi) * blend;
        let target_slope = (anneal_lambda + phi_derivative(entry.cos[y], m)) * blend;
        for j in 0..c {
            logits[j] = entry.x_norm * if j == y { target } else { entry.cos[j] };
        }
        let (l, p) = cross_entropy(&logits, y);
        loss += l;
        let gx = &mut grad_x[i * e..(i + 1) * e];
        for j in 0..c {
            let w_hat = head.row(j);
            let inv = 1.0 / w_norm[j];
            if j == y {
                let g = scale * (p[j] - 1.0);
                // d(|x| psi(c)) / dx = (psi - psi' c) x / |x| + psi' w_hat
                let a = g * (target - target_slope * entry.cos[y]) / entry.x_norm;
                let b = g * target_slope * inv;
                for d in 0..e {
                    gx[d] += a * xi[d] + b * w_hat[d];
                    grad_w_hat[j * e + d] += g * target_slope * xi[d];
                }
            } else {
                let g = scale * p[j];
                for d in 0..e {
                    gx[d] += g * w_hat[d] * inv;
                    grad_w_hat[j * e + d] += g * xi[d];
                }
            }
        }
    }
    let mut weight = vec![0.0; c * e];
    for j in 0..c {
        let w = head.row(j);
        let inv = 1.0 / w_norm[j];
        let gw = &grad_w_hat[j * e..(j + 1) * e];
        let radial = dot(gw, w) * inv;
        for d in 0..e {
            weight[j * e + d] = (gw[d] - radial * w[d] * inv) * inv;
        }
    }
    Ok(LossOutput {
        loss: loss * scale,
        grad_x,
        head: Some(HeadGrads { weight, bias: vec![0.0; c] }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::softmax_loss;
    use crate::rng::rng_from;
    use rand::Rng;

    fn random_batch(seed: u64, c: usize, e: usize, n: usize) -> (HeadParams, Vec<f64>, Vec<usize>) {
        let mut rng = rng_from(seed);
        let head = HeadParams::random(c, e, &mut rng);
        let x = (0..n * e).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = (0..n).map(|_| rng.random_range(0..c)).collect();
        (head, x, y)
    }

    #[test]
    fn margin_one_matches_normalized_softmax() {
        for seed in 0..20 {
            let (head, x, y) = random_batch(seed, 4, 6, 5);
            let a = asoftmax_loss(&head, &x, &y, 1, 0.0).unwrap();
            let s = softmax_loss(&head.normalized().unwrap(), &x, &y).unwrap();
            assert!((a.loss - s.loss).abs() < 1e-10);
        }
    }

    #[test]
    fn row_scale_invariance() {
        let (mut head, x, y) = random_batch(9, 3, 5, 4);
        let before = asoftmax_loss(&head, &x, &y, 3, 0.0).unwrap().loss;
        head.weight[5..10].iter_mut().for_each(|w| *w *= 17.0);
        let after = asoftmax_loss(&head, &x, &y, 3, 0.0).unwrap().loss;
        assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (head, x, y) = random_batch(1, 3, 5, 4);
        assert_eq!(asoftmax_loss(&head, &x, &y, 0, 0.0), Err(Error::InvalidMargin(0)));
        let zeros = vec![0.0; 20];
        assert!(matches!(asoftmax_loss(&head, &zeros, &y, 2, 0.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn cache_is_consistent() {
        let (head, x, y) = random_batch(2, 3, 5, 4);
        let cache = angle_cache(&head, &x, &y, 4).unwrap();
        for (i, entry) in cache.entries.iter().enumerate() {
            assert!(entry.cos.iter().all(|c| (-1.0..=1.0).contains(c)));
            assert!(entry.k <= 3);
            assert_eq!((entry.phi, entry.k), phi(entry.cos[y[i]], 4));
        }
    }
}

use alloc::vec;

use super::{check_labels, check_shape, cross_entropy, HeadGrads, HeadParams, LossOutput};
use crate::linalg::gemm;
use crate::Result;

/// Mean cross-entropy of `p_i = exp(W_i x + b_i) / sum_j exp(W_j x + b_j)`.
pub fn softmax_loss(head: &HeadParams, x: &[f64], labels: &[usize]) -> Result<LossOutput> {
    let (n, c, e) = (labels.len(), head.classes, head.dim);
    check_shape(x, n, e)?;
    check_labels(labels, c)?;
    let mut logits = vec![0.0; n * c];
    gemm(n, e, c, x, e, 1, &head.weight, 1, e, 0.0, &mut logits, c);
    let mut g = vec![0.0; n * c];
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let row = &mut logits[i * c..(i + 1) * c];
        row.iter_mut().zip(&head.bias).for_each(|(f, b)| *f += b);
        let (l, p) = cross_entropy(row, labels[i]);
        loss += l;
        for j in 0..c {
            g[i * c + j] = scale * (p[j] - if j == labels[i] { 1.0 } else { 0.0 });
        }
    }
    let mut grad_x = vec![0.0; n * e];
    gemm(n, c, e, &g, c, 1, &head.weight, e, 1, 0.0, &mut grad_x, e);
    let mut weight = vec![0.0; c * e];
    gemm(c, n, e, &g, 1, c, x, e, 1, 0.0, &mut weight, e);
    let bias = (0..c).map(|j| (0..n).map(|i| g[i * c + j]).sum()).collect();
    Ok(LossOutput { loss: loss * scale, grad_x, head: Some(HeadGrads { weight, bias }) })
}

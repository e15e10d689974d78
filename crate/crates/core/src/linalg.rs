//! Dense row-major linear algebra used by the network, the losses and the
//! PLDA back-end. Matrices are plain `Vec<f64>` / slices plus their shape.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `C = beta * C + A * B` over strided views, `A` is `m x k`, `B` is `k x n`
/// and `C` is `m x n` with unit column stride.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= (m - 1) * rsc + n, "gemm: C too small");
    if k == 0 {
        for i in 0..m {
            for v in &mut c[i * rsc..i * rsc + n] {
                *v *= beta;
            }
        }
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm: A too small");
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm: B too small");
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn is_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Square `d x d` matrix product.
pub fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d * d];
    gemm(d, d, d, a, d, 1, b, d, 1, 0.0, &mut c, d);
    c
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// `y = A x` for a `rows x cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|i| dot(&a[i * cols..(i + 1) * cols], x)).collect()
}

pub fn symmetrize(a: &mut [f64], d: usize) {
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (a[i * d + j] + a[j * d + i]);
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s = a[i * d + j] - dot(&l[i * d..i * d + j], &l[j * d..j * d + j]);
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::DegenerateCovariance("matrix is not positive definite"));
                }
                l[i * d + i] = libm::sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn invert_lower(l: &[f64], d: usize) -> Vec<f64> {
    let mut inv = vec![0.0; d * d];
    for col in 0..d {
        inv[col * d + col] = 1.0 / l[col * d + col];
        for i in (col + 1)..d {
            let mut s = 0.0;
            for k in col..i {
                s += l[i * d + k] * inv[k * d + col];
            }
            inv[i * d + col] = -s / l[i * d + i];
        }
    }
    inv
}

/// General inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&x, &y| m[x * d + col].abs().total_cmp(&m[y * d + col].abs()))
            .unwrap_or(col);
        if m[pivot * d + col] == 0.0 {
            return Err(Error::DegenerateCovariance("singular matrix"));
        }
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
                inv.swap(col * d + j, pivot * d + j);
            }
        }
        let p = m[col * d + col];
        for j in 0..d {
            m[col * d + j] /= p;
            inv[col * d + j] /= p;
        }
        for i in 0..d {
            if i != col {
                let f = m[i * d + col];
                if f != 0.0 {
                    for j in 0..d {
                        m[i * d + j] -= f * m[col * d + j];
                        inv[i * d + j] -= f * inv[col * d + j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the *columns* of a row-major `d x d` matrix.
pub fn sym_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    symmetrize(&mut m, d);
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| m[x * d + x].total_cmp(&m[y * d + y]));
    let values = order.iter().map(|&i| m[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..d {
            vectors[k * d + new] = v[k * d + old];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_spd(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng_from(seed);
        let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut s = matmul(&a, &transpose(&a, d, d), d);
        for i in 0..d {
            s[i * d + i] += 0.5;
        }
        s
    }

    #[test]
    fn gemm_matches_naive_with_strides() {
        // A^T (3x2 stored as 2x3) times B (2x2 stored transposed).
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 3.0, 2.0, 4.0];
        let mut c = [0.0; 6];
        gemm(3, 2, 2, &a, 1, 3, &b, 1, 2, 0.0, &mut c, 2);
        // A^T = [[1,4],[2,5],[3,6]], B = [[1,2],[3,4]]
        assert_eq!(c, [13.0, 18.0, 17.0, 24.0, 21.0, 30.0]);
    }

    #[test]
    fn cholesky_reconstructs() {
        let d = 6;
        let s = random_spd(d, 3);
        let l = cholesky(&s, d).unwrap();
        let r = matmul(&l, &transpose(&l, d, d), d);
        for (x, y) in r.iter().zip(&s) {
            assert!((x - y).abs() < 1e-12);
        }
        let li = invert_lower(&l, d);
        let id = matmul(&li, &l, d);
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * d + j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn eigen_decomposes() {
        let d = 7;
        let s = random_spd(d, 11);
        let (vals, vecs) = sym_eigen(&s, d);
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for j in 0..d {
            let col: Vec<f64> = (0..d).map(|k| vecs[k * d + j]).collect();
            let av = matvec(&s, d, d, &col);
            for k in 0..d {
                assert!((av[k] - vals[j] * col[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let d = 5;
        let s = random_spd(d, 5);
        let inv = invert(&s, d).unwrap();
        let id = matmul(&s, &inv, d);
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * d + j] - e).abs() < 1e-10);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_err());
    }
}

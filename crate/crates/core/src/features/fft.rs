use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// In-place iterative radix-2 FFT; `re.len()` must be a power of two.
fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let (s, c) = (libm::sin(ang * k as f64), libm::cos(ang * k as f64));
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// `|X_k|^2` for `k = 0..=n/2` of `frame` zero-padded to `n` points.
pub fn power_spectrum(frame: &[f64], n: usize) -> Vec<f64> {
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    re[..frame.len()].copy_from_slice(frame);
    fft(&mut re, &mut im);
    (0..=n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

/// Direct `O(n^2)` DFT power spectrum, the test oracle for the FFT path.
#[cfg(test)]
pub(crate) fn dft_power_reference(frame: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut r, mut i) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * t % n) as f64 / n as f64;
                r += x * libm::cos(ang);
                i += x * libm::sin(ang);
            }
            r * r + i * i
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_dft() {
        let frame: Vec<f64> = (0..300).map(|i| libm::sin(i as f64 * 0.37) + 0.1 * i as f64).collect();
        let a = power_spectrum(&frame, 512);
        let b = dft_power_reference(&frame, 512);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}

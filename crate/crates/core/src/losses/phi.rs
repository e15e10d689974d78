use core::f64::consts::PI;

/// Cosines are clamped to `[-1 + COS_CLAMP, 1 - COS_CLAMP]` before `acos`.
pub const COS_CLAMP: f64 = 1e-7;

/// Chebyshev polynomial of the first kind, `T_m(cos t) = cos(m t)`.
pub fn chebyshev_t(m: u32, c: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, c);
    if m == 0 {
        return prev;
    }
    for _ in 1..m {
        let next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Chebyshev polynomial of the second kind; `T_m' = m U_{m-1}`.
pub fn chebyshev_u(m: u32, c: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * c);
    if m == 0 {
        return prev;
    }
    for _ in 1..m {
        let next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn segment(cos_theta: f64, m: u32) -> u32 {
    let c = cos_theta.clamp(-1.0 + COS_CLAMP, 1.0 - COS_CLAMP);
    let k = libm::floor(f64::from(m) * libm::acos(c) / PI);
    (k.max(0.0) as u32).min(m.saturating_sub(1))
}

/// Monotone extension of `cos(m theta)` to `[0, pi]`:
/// `(-1)^k cos(m theta) - 2k` on `[k pi / m, (k + 1) pi / m]`.
///
/// `cos(m theta)` is evaluated as the Chebyshev polynomial in `cos theta`, so
/// the value is an explicit polynomial of the input. Returns `(value, k)`.
pub fn phi(cos_theta: f64, m: u32) -> (f64, u32) {
    let k = segment(cos_theta, m);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (sign * chebyshev_t(m, cos_theta) - 2.0 * f64::from(k), k)
}

/// `d phi / d cos(theta)` on the segment containing `cos_theta`.
pub fn phi_derivative(cos_theta: f64, m: u32) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let k = segment(cos_theta, m);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * f64::from(m) * chebyshev_u(m - 1, cos_theta)
}

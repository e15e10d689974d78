use crate::linalg::{dot, norm};
use crate::{Error, Result};

use super::COS_CLAMP;

/// Angular margin `(m - 1) / (m + 1) * Theta` guaranteed between two classes
/// when every sample meets the A-softmax decision rule, where `Theta` is the
/// angle between the class weights.
pub fn angular_margin(w1: &[f64], w2: &[f64], m: u32) -> Result<f64> {
    let (n1, n2) = (norm(w1), norm(w2));
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    if w1.len() != w2.len() {
        return Err(Error::DimensionMismatch { expected: w1.len(), found: w2.len() });
    }
    let c = (dot(w1, w2) / (n1 * n2)).clamp(-1.0, 1.0);
    // Exactly parallel weights have no angle; skip the clamp used elsewhere.
    let theta = if c >= 1.0 - COS_CLAMP * 1e-3 { 0.0 } else { libm::acos(c) };
    Ok((f64::from(m) - 1.0) / (f64::from(m) + 1.0) * theta)
}

//! Verification scoring back-ends.

use alloc::vec::Vec;

use crate::linalg::{dot, norm};
use crate::{Error, Result};

mod plda;

pub use plda::{plda_llr, plda_train, PldaConfig, PldaModel, PldaTrace, W_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Cosine,
    /// Negated Euclidean distance.
    Euclidean,
    Plda,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Cosine => "cosine",
            Backend::Euclidean => "euclidean",
            Backend::Plda => "plda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(Backend::Cosine),
            "euclidean" => Some(Backend::Euclidean),
            "plda" => Some(Backend::Plda),
            _ => None,
        }
    }
}

/// `a.b / (|a| |b|)`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `-|a - b|`, so that larger means more similar.
pub fn euclidean_score(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(-libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()))
}

/// Centers `x` on `center` and rescales it to norm `sqrt(dim)`.
pub fn length_normalize(x: &[f64], center: &[f64]) -> Result<Vec<f64>> {
    check_dims(x, center)?;
    let c: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let n = norm(&c);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = libm::sqrt(x.len() as f64) / n;
    Ok(c.into_iter().map(|v| v * s).collect())
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

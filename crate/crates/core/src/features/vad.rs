use alloc::vec;
use alloc::vec::Vec;

use super::FeatureMatrix;
use crate::{Error, Result};

/// Energy VAD on C0: a frame is voiced when its C0 is at least the utterance
/// mean plus `offset`. If fewer than `min_proportion` of the frames pass, the
/// highest-energy frames are kept up to that proportion.
#[derive(Debug, Clone, PartialEq)]
pub struct VadConfig {
    pub offset: f64,
    pub min_proportion: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self { offset: 0.0, min_proportion: 0.1 }
    }
}

pub fn vad_mask(f: &FeatureMatrix, cfg: &VadConfig) -> Result<Vec<bool>> {
    let t = f.num_frames();
    let energy: Vec<f64> = (0..t).map(|i| f.frame(i)[0]).collect();
    let mean = energy.iter().sum::<f64>() / t as f64;
    let threshold = mean + cfg.offset;
    // Frames equal to the threshold up to rounding of the mean count as voiced.
    let slack = 1e-9 * threshold.abs().max(1.0);
    let mut keep: Vec<bool> = energy.iter().map(|&e| e >= threshold - slack).collect();
    let needed = libm::ceil(cfg.min_proportion.clamp(0.0, 1.0) * t as f64) as usize;
    if keep.iter().filter(|&&k| k).count() < needed {
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
        keep = vec![false; t];
        for &i in &order[..needed] {
            keep[i] = true;
        }
    }
    if !keep.iter().any(|&k| k) {
        return Err(Error::AllFramesRemoved);
    }
    Ok(keep)
}

pub fn energy_vad(f: &FeatureMatrix, cfg: &VadConfig) -> Result<FeatureMatrix> {
    f.select(&vad_mask(f, cfg)?)
}

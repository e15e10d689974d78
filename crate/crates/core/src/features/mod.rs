//! Acoustic front-end: MFCC extraction, energy VAD, sliding-window mean
//! normalization, and slicing utterances into training chunks or evaluation
//! crops.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

mod chunk;
mod cmn;
mod fft;
mod mfcc;
mod vad;

pub use chunk::{crop_to_duration, make_chunks, Chunk, CHUNK_FRAMES};
pub use cmn::{sliding_cmn, DEFAULT_CMN_WINDOW};
pub use fft::power_spectrum;
pub use mfcc::{extract_mfcc, FeatureConfig, MelFilterbank};
pub use vad::{energy_vad, vad_mask, VadConfig};

/// Number of cepstral coefficients per frame (C0 included).
pub const FEAT_DIM: usize = 23;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Per-utterance `T x 23` matrix of cepstral frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    pub speaker_id: String,
    frames: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
        frames: Vec<f64>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::UtteranceTooShort { frames: 0, needed: 1 });
        }
        if frames.len() % FEAT_DIM != 0 {
            return Err(Error::DimensionMismatch {
                expected: FEAT_DIM,
                found: frames.len() % FEAT_DIM,
            });
        }
        if !crate::linalg::is_finite(&frames) {
            return Err(Error::DegenerateInput("non-finite feature value"));
        }
        Ok(Self { utterance_id: utterance_id.into(), speaker_id: speaker_id.into(), frames })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / FEAT_DIM
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * FEAT_DIM..(t + 1) * FEAT_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<f64> {
        self.frames
    }

    /// Copy of rows `start..start + n`, keeping the ids.
    pub fn slice(&self, start: usize, n: usize) -> Self {
        Self {
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            frames: self.frames[start * FEAT_DIM..(start + n) * FEAT_DIM].to_vec(),
        }
    }

    /// Rows where `keep` is true, in their original order.
    pub fn select(&self, keep: &[bool]) -> Result<Self> {
        let frames: Vec<f64> = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .flat_map(|(t, _)| self.frame(t).iter().copied())
            .collect();
        if frames.is_empty() {
            return Err(Error::AllFramesRemoved);
        }
        Ok(Self {
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            frames,
        })
    }
}

/// Full front-end: MFCC, VAD decided on the raw C0, sliding CMN over all
/// frames, then the voiced frames are kept.
pub fn featurize(
    wave: &Waveform,
    utterance_id: &str,
    speaker_id: &str,
    feat: &FeatureConfig,
    vad: &VadConfig,
    cmn_window: usize,
) -> Result<FeatureMatrix> {
    let mut raw = extract_mfcc(wave, feat)?;
    raw.utterance_id = utterance_id.into();
    raw.speaker_id = speaker_id.into();
    let keep = vad_mask(&raw, vad)?;
    sliding_cmn(&raw, cmn_window).select(&keep)
}

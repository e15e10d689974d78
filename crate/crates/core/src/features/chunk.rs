use alloc::vec::Vec;

use rand::Rng;

use super::{FeatureMatrix, FEAT_DIM};
use crate::{Error, Result};

/// Frames per training chunk.
pub const CHUNK_FRAMES: usize = 200;

/// Fixed-length training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub frames: Vec<f64>,
    pub speaker_index: usize,
}

impl Chunk {
    pub fn num_frames(&self) -> usize {
        self.frames.len() / FEAT_DIM
    }
}

/// Consecutive non-overlapping chunks of `chunk_frames` frames, starting at a
/// random offset in `0..=T % chunk_frames`.
pub fn make_chunks<R: Rng + ?Sized>(
    f: &FeatureMatrix,
    speaker_index: usize,
    chunk_frames: usize,
    rng: &mut R,
) -> Result<Vec<Chunk>> {
    let t = f.num_frames();
    if chunk_frames == 0 || t < chunk_frames {
        return Err(Error::UtteranceTooShort { frames: t, needed: chunk_frames.max(1) });
    }
    let offset = rng.random_range(0..=t % chunk_frames);
    Ok((0..(t - offset) / chunk_frames)
        .map(|i| {
            let start = (offset + i * chunk_frames) * FEAT_DIM;
            Chunk {
                frames: f.as_slice()[start..start + chunk_frames * FEAT_DIM].to_vec(),
                speaker_index,
            }
        })
        .collect())
}

/// Contiguous `n_frames` slice at a random offset.
pub fn crop_to_duration<R: Rng + ?Sized>(
    f: &FeatureMatrix,
    n_frames: usize,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let t = f.num_frames();
    if n_frames == 0 || t < n_frames {
        return Err(Error::UtteranceTooShort { frames: t, needed: n_frames.max(1) });
    }
    let offset = rng.random_range(0..=t - n_frames);
    Ok(f.slice(offset, n_frames))
}

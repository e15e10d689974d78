use alloc::vec;

use super::{FeatureMatrix, FEAT_DIM};

/// 3 s at a 10 ms frame shift.
pub const DEFAULT_CMN_WINDOW: usize = 300;

/// Subtracts from every frame the per-dimension mean of a centered window of
/// `window_frames` frames. Near the edges the window is shifted to stay
/// inside the utterance, and it is truncated only when the utterance itself
/// is shorter than the window.
pub fn sliding_cmn(f: &FeatureMatrix, window_frames: usize) -> FeatureMatrix {
    let t = f.num_frames();
    let w = window_frames.max(1).min(t);
    let mut prefix = vec![0.0; (t + 1) * FEAT_DIM];
    for i in 0..t {
        for d in 0..FEAT_DIM {
            prefix[(i + 1) * FEAT_DIM + d] = prefix[i * FEAT_DIM + d] + f.frame(i)[d];
        }
    }
    let mut out = vec![0.0; t * FEAT_DIM];
    for i in 0..t {
        let start = i.saturating_sub(w / 2).min(t - w);
        let end = start + w;
        for d in 0..FEAT_DIM {
            let mean = (prefix[end * FEAT_DIM + d] - prefix[start * FEAT_DIM + d]) / w as f64;
            out[i * FEAT_DIM + d] = f.frame(i)[d] - mean;
        }
    }
    FeatureMatrix {
        utterance_id: f.utterance_id.clone(),
        speaker_id: f.speaker_id.clone(),
        frames: out,
    }
}

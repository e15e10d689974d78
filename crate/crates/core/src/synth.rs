//! Synthetic speakers: desk-scale stand-ins for a real corpus with
//! controllable separability.
//!
//! A speaker owns a mean signature, a per-dimension noise profile and a
//! temporal smoothing filter; all three move away from a shared base in
//! proportion to `speaker_spread`, so a zero spread makes every speaker
//! statistically identical. Each utterance adds a channel offset.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::features::{FeatureMatrix, FEAT_DIM};
use crate::rng::{derive_seed, rng_from, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub frames_per_utt: usize,
    pub dim: usize,
    /// Between-speaker standard deviation.
    pub speaker_spread: f64,
    /// Per-utterance channel offset standard deviation.
    pub channel_spread: f64,
    pub frame_noise: f64,
    /// Order of the temporal smoothing filter.
    pub temporal_mix: usize,
    pub seed: u64,
    /// Prefix of speaker ids, so train and eval sets never share ids.
    pub prefix: alloc::string::String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_speakers: 200,
            utts_per_speaker: 20,
            frames_per_utt: 800,
            dim: FEAT_DIM,
            speaker_spread: 0.35,
            channel_spread: 0.4,
            frame_noise: 1.0,
            temporal_mix: 4,
            seed: 0,
            prefix: "spk".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim != FEAT_DIM {
            return bad("synthetic features must have 23 dimensions");
        }
        if self.n_speakers == 0 || self.utts_per_speaker == 0 || self.frames_per_utt == 0 {
            return bad("speaker, utterance and frame counts must be positive");
        }
        let spreads = [self.speaker_spread, self.channel_spread, self.frame_noise];
        if spreads.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("spreads must be finite and non-negative");
        }
        Ok(())
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

struct Speaker {
    mean: Vec<f64>,
    scale: Vec<f64>,
    filter: Vec<f64>,
}

/// Filter taps shared by every speaker: a decaying exponential.
fn base_filter(order: usize) -> Vec<f64> {
    (0..=order).map(|k| libm::exp(-0.5 * k as f64)).collect()
}

fn draw_speaker<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Speaker {
    let s = spec.speaker_spread;
    let mean = (0..spec.dim).map(|_| s * gauss(rng)).collect();
    let scale = (0..spec.dim).map(|_| libm::exp(0.5 * s * gauss(rng))).collect();
    let mut filter: Vec<f64> =
        base_filter(spec.temporal_mix).into_iter().map(|h| h * libm::exp(0.5 * s * gauss(rng))).collect();
    let energy = libm::sqrt(filter.iter().map(|h| h * h).sum::<f64>());
    filter.iter_mut().for_each(|h| *h /= energy);
    Speaker { mean, scale, filter }
}

fn draw_utterance<R: Rng + ?Sized>(spec: &SynthSpec, spk: &Speaker, rng: &mut R) -> Vec<f64> {
    let (d, t, order) = (spec.dim, spec.frames_per_utt, spec.temporal_mix);
    let channel: Vec<f64> = (0..d).map(|_| spec.channel_spread * gauss(rng)).collect();
    // Extra leading samples so the filter is warmed up at frame 0.
    let raw: Vec<f64> = (0..(t + order) * d).map(|_| gauss(rng)).collect();
    let mut out = vec![0.0; t * d];
    for i in 0..t {
        for k in 0..d {
            let mut acc = 0.0;
            for (j, h) in spk.filter.iter().enumerate() {
                acc += h * raw[(i + order - j) * d + k];
            }
            out[i * d + k] = spk.mean[k] + channel[k] + spec.frame_noise * spk.scale[k] * acc;
        }
    }
    out
}

/// Generates `n_speakers x utts_per_speaker` utterances. Speaker `s` draws
/// from its own seed stream, so adding speakers never changes earlier ones.
pub fn generate(spec: &SynthSpec) -> Result<Vec<FeatureMatrix>> {
    spec.validate()?;
    let root = derive_seed(spec.seed, tag("synth"));
    let mut out = Vec::with_capacity(spec.n_speakers * spec.utts_per_speaker);
    for s in 0..spec.n_speakers {
        let mut rng = rng_from(derive_seed(root, s as u64));
        let spk = draw_speaker(spec, &mut rng);
        let speaker_id = format!("{}{:04}", spec.prefix, s);
        for u in 0..spec.utts_per_speaker {
            let frames = draw_utterance(spec, &spk, &mut rng);
            out.push(FeatureMatrix::new(format!("{speaker_id}-{u:03}"), speaker_id.clone(), frames)?);
        }
    }
    Ok(out)
}

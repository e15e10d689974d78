use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{power_spectrum, FeatureMatrix, Waveform, FEAT_DIM};
use crate::{Error, Result};

/// MFCC recipe: Hamming-windowed 25 ms frames every 10 ms, 23 triangular
/// mel filters, log, orthonormal DCT-II keeping 23 cepstra including C0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub num_filters: usize,
    pub low_freq: f64,
    /// Upper filterbank edge in Hz; `0` means Nyquist.
    pub high_freq: f64,
    pub preemphasis: f64,
    pub remove_dc: bool,
    /// Floor applied to filterbank energies before the log.
    pub energy_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            num_filters: FEAT_DIM,
            low_freq: 20.0,
            high_freq: 0.0,
            preemphasis: 0.97,
            remove_dc: true,
            energy_floor: f64::EPSILON,
        }
    }
}

impl FeatureConfig {
    pub fn frame_length(&self, sample_rate: u32) -> usize {
        libm::round(self.frame_length_ms * 1e-3 * f64::from(sample_rate)) as usize
    }

    pub fn frame_shift(&self, sample_rate: u32) -> usize {
        libm::round(self.frame_shift_ms * 1e-3 * f64::from(sample_rate)) as usize
    }

    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> usize {
        let len = self.frame_length(sample_rate);
        if num_samples < len {
            0
        } else {
            (num_samples - len) / self.frame_shift(sample_rate) + 1
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * libm::log(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::exp(m / 1127.0) - 1.0)
}

/// Triangular filters laid out uniformly on the mel scale, evaluated at the
/// FFT bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `num_filters x (fft_size / 2 + 1)` weights.
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        num_filters: usize,
        fft_size: usize,
        sample_rate: u32,
        low_freq: f64,
        high_freq: f64,
    ) -> Result<Self> {
        let nyquist = 0.5 * f64::from(sample_rate);
        let high = if high_freq <= 0.0 { nyquist } else { high_freq.min(nyquist) };
        if num_filters == 0 || !(high > low_freq) || low_freq < 0.0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        let (mel_lo, mel_hi) = (hz_to_mel(low_freq), hz_to_mel(high));
        let step = (mel_hi - mel_lo) / (num_filters + 1) as f64;
        let bins = fft_size / 2 + 1;
        let mut weights = Vec::with_capacity(num_filters);
        let mut centers_hz = Vec::with_capacity(num_filters);
        for j in 0..num_filters {
            let left = mel_lo + j as f64 * step;
            let center = left + step;
            let right = center + step;
            centers_hz.push(mel_to_hz(center));
            let w = (0..bins)
                .map(|k| {
                    let mel = hz_to_mel(k as f64 * f64::from(sample_rate) / fft_size as f64);
                    if mel > left && mel <= center {
                        (mel - left) / (center - left)
                    } else if mel > center && mel < right {
                        (right - mel) / (right - center)
                    } else {
                        0.0
                    }
                })
                .collect();
            weights.push(w);
        }
        Ok(Self { weights, centers_hz })
    }

    pub fn num_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn weights(&self, filter: usize) -> &[f64] {
        &self.weights[filter]
    }

    /// Filter energies of a power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| crate::linalg::dot(w, power)).collect()
    }
}

/// Windowed, pre-emphasized analysis frame `t` of `samples`.
fn analysis_frame(samples: &[f64], start: usize, len: usize, cfg: &FeatureConfig) -> Vec<f64> {
    let mut x = samples[start..start + len].to_vec();
    if cfg.remove_dc {
        let mean = x.iter().sum::<f64>() / len as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    if cfg.preemphasis != 0.0 {
        for i in (1..len).rev() {
            x[i] -= cfg.preemphasis * x[i - 1];
        }
        x[0] -= cfg.preemphasis * x[0];
    }
    if len > 1 {
        for (i, v) in x.iter_mut().enumerate() {
            *v *= 0.54 - 0.46 * libm::cos(2.0 * PI * i as f64 / (len - 1) as f64);
        }
    }
    x
}

pub(crate) fn filterbank_energies(
    samples: &[f64],
    start: usize,
    len: usize,
    fft_size: usize,
    bank: &MelFilterbank,
    cfg: &FeatureConfig,
) -> Vec<f64> {
    let frame = analysis_frame(samples, start, len, cfg);
    bank.apply(&power_spectrum(&frame, fft_size))
}

/// Orthonormal DCT-II, keeping the first `FEAT_DIM` coefficients.
fn dct(log_energies: &[f64]) -> [f64; FEAT_DIM] {
    let m = log_energies.len() as f64;
    let mut out = [0.0; FEAT_DIM];
    for (i, c) in out.iter_mut().enumerate() {
        let scale = if i == 0 { libm::sqrt(1.0 / m) } else { libm::sqrt(2.0 / m) };
        *c = scale
            * log_energies
                .iter()
                .enumerate()
                .map(|(j, &e)| e * libm::cos(PI * i as f64 * (j as f64 + 0.5) / m))
                .sum::<f64>();
    }
    out
}

/// `T x 23` MFCC matrix of a waveform. Utterance and speaker ids are left
/// empty for the caller to fill.
pub fn extract_mfcc(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    if w.sample_rate == 0 {
        return Err(Error::InvalidSampleRate(0));
    }
    let len = cfg.frame_length(w.sample_rate);
    let shift = cfg.frame_shift(w.sample_rate);
    if len < 2 || shift == 0 || cfg.num_filters < FEAT_DIM {
        return Err(Error::InvalidSampleRate(w.sample_rate));
    }
    if w.samples.len() < len {
        return Err(Error::WaveformTooShort { samples: w.samples.len(), needed: len });
    }
    let fft_size = len.next_power_of_two();
    let bank = MelFilterbank::new(cfg.num_filters, fft_size, w.sample_rate, cfg.low_freq, cfg.high_freq)?;
    let frames = cfg.num_frames(w.samples.len(), w.sample_rate);
    let mut out = vec![0.0; frames * FEAT_DIM];
    for t in 0..frames {
        let energies = filterbank_energies(&w.samples, t * shift, len, fft_size, &bank, cfg);
        let logs: Vec<f64> = energies.iter().map(|&e| libm::log(e.max(cfg.energy_floor))).collect();
        out[t * FEAT_DIM..(t + 1) * FEAT_DIM].copy_from_slice(&dct(&logs));
    }
    FeatureMatrix::new("", "", out)
}

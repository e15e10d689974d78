use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{compute_eer, make_trials, TrialSet};
use crate::backend::{cosine_score, euclidean_score, Backend, PldaModel};
use crate::features::{crop_to_duration, FeatureMatrix};
use crate::net::{embed, NetParams};
use crate::rng::{derive_seed, rng_from, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Enrollment cropped to a fixed length, tests to each duration.
    FixedEnroll { enroll_frames: usize },
    /// Enrollment and test cropped to the same duration.
    EqualDuration,
}

impl Protocol {
    pub const PAPER_ENROLL_FRAMES: usize = 3000;

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::FixedEnroll { .. } => "fixed-enroll",
            Protocol::EqualDuration => "equal-duration",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub durations: Vec<usize>,
    pub backends: Vec<Backend>,
    pub enroll_per_spk: usize,
    pub test_per_spk: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(protocol: Protocol, durations: Vec<usize>, backends: Vec<Backend>, seed: u64) -> Self {
        Self { protocol, durations, backends, enroll_per_spk: 1, test_per_spk: 3, seed }
    }
}

/// Result for one (duration, back-end) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub duration: usize,
    pub backend: Backend,
    /// `None` when no scorable trial of each class survived.
    pub eer: Option<f64>,
    pub threshold: Option<f64>,
    /// Score per trial, `None` where an utterance was too short.
    pub scores: Vec<Option<f64>>,
    pub skipped_utterances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub protocol: Protocol,
    pub trials: TrialSet,
    /// Utterance and speaker ids, indexed like the input data.
    pub utterance_ids: Vec<(alloc::string::String, alloc::string::String)>,
    pub conditions: Vec<Condition>,
}

impl Report {
    pub fn eer(&self, duration: usize, backend: Backend) -> Option<f64> {
        self.conditions
            .iter()
            .find(|c| c.duration == duration && c.backend == backend)
            .and_then(|c| c.eer)
    }
}

/// Groups utterances by speaker id, in sorted id order.
fn speakers_of(data: &[FeatureMatrix]) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in data.iter().enumerate() {
        map.entry(f.speaker_id.as_str()).or_default().push(i);
    }
    map.into_values().collect()
}

fn crop_embed(
    net: &NetParams,
    f: &FeatureMatrix,
    frames: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let mut rng = rng_from(seed);
    match crop_to_duration(f, frames, &mut rng) {
        Ok(c) => embed(net, c.as_slice()).map(Some),
        Err(Error::UtteranceTooShort { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Crops, embeds and scores every trial for each duration and back-end.
pub fn run_protocol(
    cfg: &ProtocolConfig,
    net: &NetParams,
    plda: Option<&PldaModel>,
    data: &[FeatureMatrix],
) -> Result<Report> {
    if cfg.backends.contains(&Backend::Plda) && plda.is_none() {
        return Err(Error::InvalidConfig("PLDA back-end requested without a PLDA model".into()));
    }
    let speakers = speakers_of(data);
    let mut rng = rng_from(derive_seed(cfg.seed, tag("trials")));
    let trials = make_trials(&speakers, cfg.enroll_per_spk, cfg.test_per_spk, &mut rng)?;
    let crop_root = derive_seed(cfg.seed, tag("crop"));
    let mut conditions = Vec::new();
    for &duration in &cfg.durations {
        let dur_seed = derive_seed(crop_root, duration as u64);
        let mut emb: Vec<Option<Vec<f64>>> = vec![None; data.len()];
        let mut skipped = 0;
        let roles = trials
            .enroll
            .iter()
            .map(|&u| (u, true))
            .chain(trials.test.iter().map(|&u| (u, false)));
        for (u, is_enroll) in roles {
            let frames = match (cfg.protocol, is_enroll) {
                (Protocol::FixedEnroll { enroll_frames }, true) => enroll_frames,
                _ => duration,
            };
            emb[u] = crop_embed(net, &data[u], frames, derive_seed(dur_seed, u as u64))?;
            skipped += usize::from(emb[u].is_none());
        }
        for &backend in &cfg.backends {
            let projected: Vec<Option<Vec<f64>>> = match (backend, plda) {
                (Backend::Plda, Some(m)) => emb
                    .iter()
                    .map(|e| e.as_ref().map(|v| m.project(v)).transpose())
                    .collect::<Result<_>>()?,
                _ => emb.clone(),
            };
            let scores: Vec<Option<f64>> = trials
                .trials
                .iter()
                .map(|t| match (&projected[t.enroll], &projected[t.test]) {
                    (Some(a), Some(b)) => match backend {
                        Backend::Cosine => cosine_score(a, b).map(Some),
                        Backend::Euclidean => euclidean_score(a, b).map(Some),
                        Backend::Plda => Ok(plda.map(|m| m.llr_projected(a, b))),
                    },
                    _ => Ok(None),
                })
                .collect::<Result<_>>()?;
            let (kept, labels): (Vec<f64>, Vec<bool>) = scores
                .iter()
                .zip(&trials.trials)
                .filter_map(|(s, t)| s.map(|s| (s, t.target)))
                .unzip();
            let (eer, threshold) = match compute_eer(&kept, &labels) {
                Ok((e, th)) => (Some(e), Some(th)),
                Err(Error::SingleClassScores) => (None, None),
                Err(e) => return Err(e),
            };
            conditions.push(Condition {
                duration,
                backend,
                eer,
                threshold,
                scores,
                skipped_utterances: skipped,
            });
        }
    }
    let utterance_ids =
        data.iter().map(|f| (f.utterance_id.clone(), f.speaker_id.clone())).collect();
    Ok(Report { protocol: cfg.protocol, trials, utterance_ids, conditions })
}

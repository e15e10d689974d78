use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

/// Enroll and test are indices into the caller's utterance list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub enroll: usize,
    pub test: usize,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSet {
    /// Enrollment utterances, grouped by speaker in input order.
    pub enroll: Vec<usize>,
    pub test: Vec<usize>,
    /// Every enroll utterance against every test utterance, enroll-major.
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn num_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.target).count()
    }
}

/// Draws `enroll_per_spk` enrollment and `test_per_spk` test utterances per
/// speaker (disjoint), then crosses all enrollments with all tests.
///
/// `speakers[s]` lists the utterance indices of speaker `s`.
pub fn make_trials<R: Rng + ?Sized>(
    speakers: &[Vec<usize>],
    enroll_per_spk: usize,
    test_per_spk: usize,
    rng: &mut R,
) -> Result<TrialSet> {
    if speakers.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let need = enroll_per_spk + test_per_spk;
    let mut enroll = Vec::new();
    let mut test = Vec::new();
    let mut enroll_spk = Vec::new();
    let mut test_spk = Vec::new();
    for (s, utts) in speakers.iter().enumerate() {
        if utts.len() < need {
            return Err(Error::InsufficientUtterances { speaker: s, have: utts.len(), need });
        }
        let mut pool = utts.clone();
        pool.shuffle(rng);
        enroll.extend_from_slice(&pool[..enroll_per_spk]);
        test.extend_from_slice(&pool[enroll_per_spk..need]);
        enroll_spk.extend(core::iter::repeat_n(s, enroll_per_spk));
        test_spk.extend(core::iter::repeat_n(s, test_per_spk));
    }
    let mut trials = Vec::with_capacity(enroll.len() * test.len());
    for (&e, &es) in enroll.iter().zip(&enroll_spk) {
        for (&t, &ts) in test.iter().zip(&test_spk) {
            trials.push(Trial { enroll: e, test: t, target: es == ts });
        }
    }
    Ok(TrialSet { enroll, test, trials })
}

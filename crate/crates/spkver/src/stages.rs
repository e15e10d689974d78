//! Stage drivers shared by the CLI subcommands and the pipeline.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use spkver_core::backend::{plda_train, PldaConfig, PldaModel};
use spkver_core::features::{featurize, make_chunks, FeatureConfig, FeatureMatrix, VadConfig};
use spkver_core::rng::{derive_seed, rng_from};
use spkver_core::trainer::{resume, train, Checkpoint, EpochStats, Model, TrainConfig};

use crate::archive::EmbeddingSet;
use crate::model_io::{write_checkpoint, write_model_file};
use crate::wav::{read_wav, scan_wav_dir};
use crate::{Error, Result};

/// MFCC, VAD and CMN over every WAV under `dir`.
pub fn featurize_dir(dir: &Path, vad: &VadConfig, cmn_window: usize) -> Result<Vec<FeatureMatrix>> {
    let feat = FeatureConfig::default();
    scan_wav_dir(dir)?
        .into_iter()
        .map(|e| {
            let w = read_wav(&e.path)?;
            featurize(&w, &e.utterance_id, &e.speaker_id, &feat, vad, cmn_window)
                .map_err(|err| Error::format(e.path.display().to_string(), err.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub model: Option<PathBuf>,
    /// Directory for one checkpoint per epoch.
    pub checkpoints: Option<PathBuf>,
    /// Append-only `epoch,lr,lambda,loss,accuracy` CSV.
    pub metrics: Option<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.ckpt"))
}

/// Trains (or resumes) and writes the requested artifacts. A fresh run
/// truncates the metrics file, a resumed one appends to it.
pub fn run_training(
    cfg: &TrainConfig,
    data: &[FeatureMatrix],
    from: Option<Checkpoint>,
    out: &TrainOutputs,
) -> Result<Checkpoint> {
    if let Some(m) = &out.metrics {
        if from.is_none() || !m.exists() {
            crate::write_atomic(m, b"epoch,lr,lambda,loss,accuracy\n")?;
        }
    }
    let mut failure: Option<Error> = None;
    let mut observe = |s: &EpochStats, ck: &Checkpoint| -> spkver_core::Result<()> {
        log::info!(
            "epoch {} lr {:.6} lambda {:.4} loss {:.6} accuracy {:.4} ({} batches)",
            s.epoch, s.lr, s.lambda, s.loss, s.accuracy, s.batches
        );
        let res = (|| -> Result<()> {
            if let Some(m) = &out.metrics {
                let mut f = OpenOptions::new().append(true).open(m).map_err(|e| Error::io(m, e))?;
                writeln!(f, "{},{:?},{:?},{:?},{:?}", s.epoch, s.lr, s.lambda, s.loss, s.accuracy)
                    .map_err(|e| Error::io(m, e))?;
            }
            if let Some(dir) = &out.checkpoints {
                write_checkpoint(&checkpoint_path(dir, ck.epoch), ck)?;
            }
            Ok(())
        })();
        res.map_err(|e| {
            failure = Some(e);
            spkver_core::Error::InvalidConfig("artifact write failed".into())
        })
    };
    let result = match from {
        Some(ck) => resume(cfg, data, ck, &mut observe),
        None => train(cfg, data, &mut observe),
    };
    let ckpt = match (result, failure) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    if let Some(p) = &out.model {
        write_model_file(p, &ckpt.model)?;
    }
    Ok(ckpt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtractMode {
    /// One embedding over the whole utterance.
    Full,
    /// One embedding per chunk, at most `max_per_utt` (0 = all) per utterance.
    Chunks { chunk_frames: usize, max_per_utt: usize, seed: u64 },
}

pub fn extract_embeddings(model: &Model, data: &[FeatureMatrix], mode: ExtractMode) -> Result<Vec<EmbeddingSet>> {
    data.iter()
        .enumerate()
        .map(|(i, f)| {
            let vectors = match mode {
                ExtractMode::Full => vec![model.embed(f.as_slice())?],
                ExtractMode::Chunks { chunk_frames, max_per_utt, seed } => {
                    let mut rng = rng_from(derive_seed(seed, i as u64));
                    let chunks = make_chunks(f, 0, chunk_frames, &mut rng)?;
                    let keep = if max_per_utt == 0 { chunks.len() } else { max_per_utt.min(chunks.len()) };
                    chunks[..keep].iter().map(|c| model.embed(&c.frames)).collect::<spkver_core::Result<_>>()?
                }
            };
            Ok(EmbeddingSet { utterance_id: f.utterance_id.clone(), speaker_id: f.speaker_id.clone(), vectors })
        })
        .collect()
}

/// Fits PLDA with every stored row as one example of its speaker.
pub fn train_plda_from(sets: &[EmbeddingSet], cfg: &PldaConfig) -> Result<PldaModel> {
    let mut ids = BTreeMap::new();
    for s in sets {
        let next = ids.len();
        ids.entry(s.speaker_id.as_str()).or_insert(next);
    }
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for s in sets {
        for v in &s.vectors {
            x.push(v.as_slice());
            labels.push(ids[s.speaker_id.as_str()]);
        }
    }
    let (model, trace) = plda_train(&x, &labels, cfg)?;
    log::info!("plda: {} vectors, {} speakers, log-likelihood {:?}", x.len(), ids.len(), trace.log_likelihood);
    Ok(model)
}

//! Minibatch SGD over 200-frame chunks with a per-epoch exponential
//! learning-rate decay.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::features::{make_chunks, Chunk, FeatureMatrix, CHUNK_FRAMES};
use crate::linalg::is_finite;
use crate::losses::{asoftmax_loss, softmax_loss, triplet_loss, HeadParams, LossKind, LossOutput};
use crate::net::{backward, embed, forward_batch, Architecture, Mode, NetParams, DEFAULT_BN_MOMENTUM};
use crate::rng::{derive_seed, rng_from, tag, SeededRng};
use crate::{Error, Result};

/// Blended A-softmax target `(lambda cos + phi) / (1 + lambda)` with
/// `lambda = max(lambda0 * decay^epoch, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anneal {
    pub lambda0: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for Anneal {
    fn default() -> Self {
        Self { lambda0: 1000.0, decay: 0.96, floor: 5.0 }
    }
}

impl Anneal {
    pub fn lambda(&self, epoch: usize) -> f64 {
        (self.lambda0 * libm::pow(self.decay, epoch as f64)).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub loss: LossKind,
    pub minibatch_chunks: usize,
    pub chunk_frames: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_stop: f64,
    /// Optional cap on the number of epochs, on top of the `lr_stop` rule.
    pub max_epochs: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `None` trains on the pure A-softmax objective.
    pub anneal: Option<Anneal>,
    pub bn_momentum: f64,
    /// Triplet batches hold `triplet_speakers x triplet_chunks` chunks.
    pub triplet_speakers: usize,
    pub triplet_chunks: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(arch: Architecture, loss: LossKind, seed: u64) -> Self {
        Self {
            arch,
            loss,
            minibatch_chunks: 1000,
            chunk_frames: CHUNK_FRAMES,
            lr0: 0.01,
            lr_decay: 0.9,
            lr_stop: 1e-4,
            max_epochs: None,
            momentum: 0.0,
            weight_decay: 0.0,
            anneal: Some(Anneal::default()),
            bn_momentum: DEFAULT_BN_MOMENTUM,
            triplet_speakers: 50,
            triplet_chunks: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        self.arch.validate()?;
        if !(self.lr0 > self.lr_stop && self.lr_stop > 0.0) {
            return bad("need lr0 > lr_stop > 0");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("need 0 < lr_decay < 1");
        }
        if self.minibatch_chunks < 2 {
            return bad("minibatch must hold at least two chunks");
        }
        if self.chunk_frames < self.arch.min_frames() {
            return bad("chunks are shorter than the network context");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("momentum values must lie in [0, 1)");
        }
        if let LossKind::ASoftmax { m } = self.loss {
            if m < 1 {
                return Err(Error::InvalidMargin(m));
            }
        }
        if let LossKind::Triplet { .. } = self.loss {
            if self.triplet_speakers < 2 || self.triplet_chunks < 2 {
                return bad("triplet batches need at least 2 speakers x 2 chunks");
            }
        }
        Ok(())
    }

    /// `lr0 * lr_decay^epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * libm::pow(self.lr_decay, epoch as f64)
    }

    /// Epochs run before the learning rate first drops below `lr_stop`.
    pub fn num_epochs(&self) -> usize {
        let by_lr = (0..).find(|&e| self.lr_at(e) < self.lr_stop).unwrap_or(0);
        self.max_epochs.map_or(by_lr, |m| m.min(by_lr))
    }

    pub fn lambda_at(&self, epoch: usize) -> f64 {
        match (self.loss, self.anneal) {
            (LossKind::ASoftmax { .. }, Some(a)) => a.lambda(epoch),
            _ => 0.0,
        }
    }
}

/// Network, classifier head (absent for triplet training) and the label
/// map from head rows to speaker ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: NetParams,
    pub head: Option<HeadParams>,
    pub loss: LossKind,
    pub speakers: Vec<String>,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(
        arch: Architecture,
        loss: LossKind,
        speakers: Vec<String>,
        rng: &mut R,
    ) -> Result<Self> {
        let net = NetParams::init(arch, rng)?;
        let head =
            loss.has_head().then(|| HeadParams::random(speakers.len(), net.arch.embed_dim(), rng));
        Ok(Self { net, head, loss, speakers })
    }

    pub fn embed(&self, frames: &[f64]) -> Result<Vec<f64>> {
        embed(&self.net, frames)
    }

    fn is_finite(&self) -> bool {
        self.net.is_finite()
            && self.head.as_ref().is_none_or(|h| is_finite(&h.weight) && is_finite(&h.bias))
    }
}

/// Training state after `epoch` completed epochs. Per-epoch randomness is
/// derived from `(seed, epoch)`, so this is all a resume needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: usize,
    pub lr: f64,
    pub seed: u64,
    /// SGD momentum buffer, empty when momentum is off.
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub lambda: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub batches: usize,
}

/// Sorted distinct speaker ids and the class index of every utterance.
pub fn label_map(data: &[FeatureMatrix]) -> (Vec<String>, Vec<usize>) {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for f in data {
        ids.insert(f.speaker_id.as_str(), 0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let labels = data.iter().map(|f| ids[f.speaker_id.as_str()]).collect();
    (ids.keys().map(|s| String::from(*s)).collect(), labels)
}

fn epoch_chunks(
    cfg: &TrainConfig,
    data: &[FeatureMatrix],
    labels: &[usize],
    rng: &mut SeededRng,
) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    for (f, &y) in data.iter().zip(labels) {
        // Utterances shorter than a chunk contribute nothing.
        if let Ok(c) = make_chunks(f, y, cfg.chunk_frames, rng) {
            chunks.extend(c);
        }
    }
    chunks
}

fn batches(cfg: &TrainConfig, chunks: &[Chunk], rng: &mut SeededRng) -> Vec<Vec<usize>> {
    if let LossKind::Triplet { .. } = cfg.loss {
        return triplet_batches(cfg, chunks, rng);
    }
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.shuffle(rng);
    order.chunks(cfg.minibatch_chunks).filter(|b| b.len() >= 2).map(<[usize]>::to_vec).collect()
}

/// Batches of up to `P` speakers with up to `K` chunks each, so every batch
/// contains positives.
fn triplet_batches(cfg: &TrainConfig, chunks: &[Chunk], rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut by_speaker: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in chunks.iter().enumerate() {
        by_speaker.entry(c.speaker_index).or_default().push(i);
    }
    let mut queues: Vec<VecDeque<usize>> = by_speaker
        .into_values()
        .map(|mut v| {
            v.shuffle(rng);
            v.into()
        })
        .collect();
    let mut out = Vec::new();
    loop {
        let mut active: Vec<usize> = (0..queues.len()).filter(|&s| queues[s].len() >= 2).collect();
        if active.len() < 2 {
            break;
        }
        active.shuffle(rng);
        let mut batch = Vec::new();
        for &s in active.iter().take(cfg.triplet_speakers) {
            let take = cfg.triplet_chunks.min(queues[s].len());
            batch.extend(queues[s].drain(..take));
        }
        out.push(batch);
    }
    out
}

fn compute_loss(
    model: &Model,
    emb: &[f64],
    labels: &[usize],
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<(LossOutput, f64)> {
    let dim = model.net.arch.embed_dim();
    match (model.loss, &model.head) {
        (LossKind::Triplet { margin, mining }, _) => {
            let (out, triplets) = triplet_loss(emb, dim, labels, margin, mining, rng)?;
            let sq = |a: usize, b: usize| -> f64 {
                emb[a * dim..(a + 1) * dim]
                    .iter()
                    .zip(&emb[b * dim..(b + 1) * dim])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum()
            };
            let ok = triplets.iter().filter(|t| sq(t.anchor, t.positive) < sq(t.anchor, t.negative));
            let acc = ok.count() as f64 / triplets.len() as f64;
            Ok((out, acc))
        }
        (kind, Some(head)) => {
            let out = match kind {
                LossKind::ASoftmax { m } => asoftmax_loss(head, emb, labels, m, lambda)?,
                _ => softmax_loss(head, emb, labels)?,
            };
            let correct = labels
                .iter()
                .enumerate()
                .filter(|(i, &y)| head.predict(&emb[i * dim..(i + 1) * dim], kind) == y)
                .count();
            Ok((out, correct as f64 / labels.len() as f64))
        }
        (_, None) => Err(Error::InvalidConfig("classification loss without a head".into())),
    }
}

/// Loss and accuracy of `model` on one batch, with batch norm in inference
/// mode. Accuracy uses the un-margined decision rule (argmax of
/// `W_i x + b_i`, or of `cos theta_i` for A-softmax); for triplet models it
/// is the share of mined triplets whose positive is closer than the
/// negative.
pub fn evaluate_train_metrics(
    model: &Model,
    batch: &[&[f64]],
    labels: &[usize],
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: batch.len(), found: labels.len() });
    }
    let (emb, _) = forward_batch(&model.net, batch, Mode::Infer)?;
    let (out, acc) = compute_loss(model, &emb, labels, lambda, rng)?;
    Ok((out.loss, acc))
}

fn sgd_step(cfg: &TrainConfig, lr: f64, params: &mut [f64], grads: &[f64], velocity: &mut [f64]) {
    for i in 0..params.len() {
        let g = grads[i] + cfg.weight_decay * params[i];
        let step = if velocity.is_empty() {
            g
        } else {
            velocity[i] = cfg.momentum * velocity[i] + g;
            velocity[i]
        };
        params[i] -= lr * step;
    }
}

/// Trains from scratch. `observer` sees every finished epoch together with
/// the checkpoint that would resume from it.
pub fn train(
    cfg: &TrainConfig,
    data: &[FeatureMatrix],
    observer: impl FnMut(&EpochStats, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (speakers, _) = label_map(data);
    if speakers.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least two speakers".into()));
    }
    let mut rng = rng_from(derive_seed(cfg.seed, tag("init")));
    let model = Model::init(cfg.arch.clone(), cfg.loss, speakers, &mut rng)?;
    let start = Checkpoint { model, epoch: 0, lr: cfg.lr0, seed: cfg.seed, velocity: Vec::new() };
    resume(cfg, data, start, observer)
}

/// Continues training from `ckpt`; yields the same trajectory as an
/// uninterrupted run.
pub fn resume(
    cfg: &TrainConfig,
    data: &[FeatureMatrix],
    mut ckpt: Checkpoint,
    mut observer: impl FnMut(&EpochStats, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let (speakers, labels) = label_map(data);
    if speakers != ckpt.model.speakers {
        return Err(Error::InvalidConfig("training speakers differ from the model's".into()));
    }
    let n_params = ckpt.model.net.num_params()
        + ckpt.model.head.as_ref().map_or(0, |h| h.weight.len() + h.bias.len());
    if cfg.momentum > 0.0 && ckpt.velocity.len() != n_params {
        ckpt.velocity = vec![0.0; n_params];
    }
    let epochs = cfg.num_epochs();
    let probe = epoch_chunks(cfg, data, &labels, &mut rng_from(0));
    if probe.is_empty() {
        return Err(Error::EmptyDataset);
    }
    while ckpt.epoch < epochs {
        let epoch = ckpt.epoch;
        let lr = cfg.lr_at(epoch);
        let lambda = cfg.lambda_at(epoch);
        let mut rng = rng_from(derive_seed(cfg.seed, epoch as u64));
        let chunks = epoch_chunks(cfg, data, &labels, &mut rng);
        let plan = batches(cfg, &chunks, &mut rng);
        let (mut loss_sum, mut acc_sum, mut weight) = (0.0, 0.0, 0.0);
        for (bi, batch) in plan.iter().enumerate() {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| chunks[i].frames.as_slice()).collect();
            let y: Vec<usize> = batch.iter().map(|&i| chunks[i].speaker_index).collect();
            let model = &mut ckpt.model;
            let (emb, tape) = forward_batch(&model.net, &inputs, Mode::Train)?;
            let (out, acc) = match compute_loss(model, &emb, &y, lambda, &mut rng) {
                Err(Error::NoValidTriplet) => continue,
                r => r?,
            };
            if !out.loss.is_finite() || !is_finite(&out.grad_x) {
                return Err(Error::NonFinite { what: "loss", epoch, batch: bi });
            }
            let grads = backward(&model.net, &tape, &out.grad_x);
            model.net.update_running_stats(&tape, cfg.bn_momentum);
            let mut offset = 0;
            let velocity = &mut ckpt.velocity;
            for (p, g) in model.net.slices_mut().zip(grads.slices()) {
                let v = if velocity.is_empty() { &mut [][..] } else { &mut velocity[offset..offset + p.len()] };
                sgd_step(cfg, lr, p, g, v);
                offset += p.len();
            }
            if let (Some(head), Some(hg)) = (model.head.as_mut(), out.head.as_ref()) {
                for (p, g) in [(&mut head.weight, &hg.weight), (&mut head.bias, &hg.bias)] {
                    let v = if velocity.is_empty() {
                        &mut [][..]
                    } else {
                        &mut velocity[offset..offset + p.len()]
                    };
                    sgd_step(cfg, lr, p, g, v);
                    offset += p.len();
                }
            }
            if !model.is_finite() {
                return Err(Error::NonFinite { what: "parameters", epoch, batch: bi });
            }
            let w = batch.len() as f64;
            loss_sum += out.loss * w;
            acc_sum += acc * w;
            weight += w;
        }
        if weight == 0.0 {
            return Err(Error::EmptyDataset);
        }
        ckpt.epoch = epoch + 1;
        ckpt.lr = cfg.lr_at(epoch + 1);
        let stats = EpochStats {
            epoch,
            lr,
            lambda,
            loss: loss_sum / weight,
            accuracy: acc_sum / weight,
            batches: plan.len(),
        };
        observer(&stats, &ckpt)?;
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEAT_DIM;
    use crate::linalg::dot;
    use crate::losses::Mining;
    use alloc::format;

    fn toy(speakers: usize, utts: usize, frames: usize, sep: f64) -> Vec<FeatureMatrix> {
        let mut rng = rng_from(77);
        let mut out = Vec::new();
        for s in 0..speakers {
            let c: Vec<f64> = (0..FEAT_DIM).map(|_| rng.random_range(-sep..sep)).collect();
            for u in 0..utts {
                let x = (0..frames * FEAT_DIM).map(|i| c[i % FEAT_DIM] + rng.random_range(-1.0..1.0)).collect();
                out.push(FeatureMatrix::new(format!("s{s}-{u}"), format!("s{s}"), x).unwrap());
            }
        }
        out
    }

    fn tiny_cfg(loss: LossKind) -> TrainConfig {
        let mut cfg = TrainConfig::new(Architecture::from_widths(FEAT_DIM, [8, 8, 8, 8, 16], 8, 6), loss, 3);
        cfg.minibatch_chunks = 8;
        cfg.chunk_frames = 20;
        cfg.lr0 = 0.1;
        cfg.max_epochs = Some(5);
        cfg.triplet_speakers = 2;
        cfg.triplet_chunks = 4;
        cfg
    }

    #[test]
    fn paper_schedule_runs_44_epochs() {
        let cfg = TrainConfig::new(Architecture::table1(), LossKind::Softmax, 0);
        assert_eq!(cfg.num_epochs(), 44);
        assert_eq!(cfg.lr_at(3), 0.01 * libm::pow(0.9, 3.0));
        let a = Anneal::default();
        assert_eq!(a.lambda(0), 1000.0);
        assert_eq!(a.lambda(500), 5.0);
    }

    #[test]
    fn separable_softmax_reaches_full_accuracy() {
        let data = toy(2, 4, 60, 2.0);
        let mut last = None;
        train(&tiny_cfg(LossKind::Softmax), &data, |s, _| {
            last = Some(*s);
            Ok(())
        })
        .unwrap();
        assert_eq!(last.unwrap().accuracy, 1.0);
    }

    #[test]
    fn deterministic_and_resumable() {
        let data = toy(3, 3, 50, 1.0);
        for loss in [
            LossKind::ASoftmax { m: 2 },
            LossKind::Triplet { margin: 0.2, mining: Mining::SemiHard },
        ] {
            let cfg = tiny_cfg(loss);
            let mut mid = None;
            let full = train(&cfg, &data, |s, c| {
                if s.epoch == 1 {
                    mid = Some(c.clone());
                }
                Ok(())
            })
            .unwrap();
            assert_eq!(full, train(&cfg, &data, |_, _| Ok(())).unwrap());
            let resumed = resume(&cfg, &data, mid.unwrap(), |_, _| Ok(())).unwrap();
            assert_eq!(full, resumed);
        }
    }

    #[test]
    fn metrics_on_perfect_and_empty_batches() {
        let data = toy(2, 1, 30, 1.0);
        let cfg = tiny_cfg(LossKind::Softmax);
        let mut model = train(&cfg, &data, |_, _| Ok(())).unwrap().model;
        let mut rng = rng_from(0);
        assert_eq!(evaluate_train_metrics(&model, &[], &[], 0.0, &mut rng), Err(Error::EmptyDataset));
        // Point the head straight at each utterance's embedding.
        let e: Vec<Vec<f64>> = data.iter().map(|f| model.embed(f.as_slice()).unwrap()).collect();
        let head = model.head.as_mut().unwrap();
        head.weight = e.concat();
        head.bias = e.iter().map(|v| -0.5 * dot(v, v)).collect();
        let batch: Vec<&[f64]> = data.iter().map(FeatureMatrix::as_slice).collect();
        let (_, acc) = evaluate_train_metrics(&model, &batch, &[0, 1], 0.0, &mut rng).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_cfg(LossKind::Softmax);
        cfg.lr_stop = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(LossKind::ASoftmax { m: 0 });
        assert_eq!(cfg.validate(), Err(Error::InvalidMargin(0)));
        cfg.loss = LossKind::Softmax;
        cfg.chunk_frames = 5;
        assert!(cfg.validate().is_err());
        assert!(train(&tiny_cfg(LossKind::Softmax), &toy(1, 3, 40, 1.0), |_, _| Ok(())).is_err());
    }
}

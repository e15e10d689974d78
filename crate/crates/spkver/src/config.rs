//! `key = value` text configs. `#` starts a comment and `[section]` headers
//! prefix the keys that follow with `section.`. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use spkver_core::losses::{LossKind, Mining};
use spkver_core::net::{Architecture, LayerKind};
use spkver_core::synth::SynthSpec;
use spkver_core::trainer::{Anneal, TrainConfig};

use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    context: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Usage(format!("{context}:{}: {m}", i + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| bad("unterminated section header"))?.trim();
                section = if name.is_empty() { String::new() } else { format!("{name}.") };
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let key = format!("{section}{}", k.trim());
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(bad(&format!("duplicate key {key}")));
            }
        }
        Ok(Self { context: context.into(), entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.into(), (value.to_string(), 0));
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                Error::Usage(format!("{}:{line}: bad value {v:?} for {key}", self.context))
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(raw) = self.take::<String>(key)? else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Usage(format!("{}: bad list item {s:?} in {key}", self.context))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Moves every `prefix*` key into a new set with the prefix stripped.
    pub fn take_prefix(&mut self, prefix: &str) -> KeyValues {
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        let entries = keys
            .into_iter()
            .map(|k| {
                let v = self.entries.remove(&k).unwrap();
                (k[prefix.len()..].to_string(), v)
            })
            .collect();
        KeyValues { context: self.context.clone(), entries }
    }

    /// Adds `other`'s entries, replacing existing keys.
    pub fn overlay(&mut self, other: KeyValues) {
        self.entries.extend(other.entries);
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Fails on any key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(Error::Usage(format!("{}:{line}: unknown key {k}", self.context))),
        }
    }
}

fn arch_widths(arch: &Architecture) -> Option<([usize; 5], usize, usize)> {
    let tdnn: Vec<usize> = arch.layers.iter().filter(|l| l.kind == LayerKind::Tdnn).map(|l| l.out_dim).collect();
    let fc: Vec<usize> = arch.layers.iter().filter(|l| l.kind == LayerKind::Fc).map(|l| l.out_dim).collect();
    Some((tdnn.try_into().ok()?, *fc.first()?, *fc.get(1)?))
}

fn parse_contexts(s: &str) -> Result<Vec<Vec<i32>>> {
    s.split(';')
        .map(|layer| {
            layer
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Usage(format!("bad context offset {v:?}"))))
                .collect()
        })
        .collect()
}

fn loss_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Softmax => "softmax",
        LossKind::ASoftmax { .. } => "asoftmax",
        LossKind::Triplet { .. } => "triplet",
    }
}

fn mining_name(m: Mining) -> &'static str {
    match m {
        Mining::SemiHard => "semihard",
        Mining::Random => "random",
    }
}

/// Reads training keys under `prefix` (e.g. `"train."` or `""`).
pub fn train_config(kv: &mut KeyValues, prefix: &str, seed: u64) -> Result<TrainConfig> {
    let k = |s: &str| format!("{prefix}{s}");
    let scale: usize = kv.take_or(&k("scale"), 1)?;
    let (tw, fw, ew) = arch_widths(&Architecture::scaled(scale)).unwrap();
    let tdnn: Vec<usize> = kv.take_list(&k("tdnn_widths"))?.unwrap_or(tw.to_vec());
    let tdnn: [usize; 5] =
        tdnn.try_into().map_err(|_| Error::Usage(format!("{} needs five widths", k("tdnn_widths"))))?;
    let fc = kv.take_or(&k("fc_width"), fw)?;
    let embed = kv.take_or(&k("embed_dim"), ew)?;
    let mut arch = Architecture::from_widths(spkver_core::features::FEAT_DIM, tdnn, fc, embed);
    if let Some(c) = kv.take::<String>(&k("contexts"))? {
        arch = arch.with_contexts(&parse_contexts(&c)?)?;
    }
    let loss = match kv.take_or(&k("loss"), "asoftmax".to_string())?.as_str() {
        "softmax" => LossKind::Softmax,
        "asoftmax" => LossKind::ASoftmax { m: kv.take_or(&k("margin_m"), 3)? },
        "triplet" => LossKind::Triplet {
            margin: kv.take_or(&k("triplet_margin"), 0.2)?,
            mining: match kv.take_or(&k("mining"), "semihard".to_string())?.as_str() {
                "semihard" => Mining::SemiHard,
                "random" => Mining::Random,
                other => return Err(Error::Usage(format!("unknown mining mode {other:?}"))),
            },
        },
        other => return Err(Error::Usage(format!("unknown loss {other:?}"))),
    };
    let mut cfg = TrainConfig::new(arch, loss, kv.take_or(&k("seed"), seed)?);
    cfg.minibatch_chunks = kv.take_or(&k("minibatch_chunks"), cfg.minibatch_chunks)?;
    cfg.chunk_frames = kv.take_or(&k("chunk_frames"), cfg.chunk_frames)?;
    cfg.lr0 = kv.take_or(&k("lr0"), cfg.lr0)?;
    cfg.lr_decay = kv.take_or(&k("lr_decay"), cfg.lr_decay)?;
    cfg.lr_stop = kv.take_or(&k("lr_stop"), cfg.lr_stop)?;
    cfg.max_epochs = kv.take(&k("max_epochs"))?.or(cfg.max_epochs);
    cfg.momentum = kv.take_or(&k("momentum"), cfg.momentum)?;
    cfg.weight_decay = kv.take_or(&k("weight_decay"), cfg.weight_decay)?;
    cfg.bn_momentum = kv.take_or(&k("bn_momentum"), cfg.bn_momentum)?;
    cfg.triplet_speakers = kv.take_or(&k("triplet_speakers"), cfg.triplet_speakers)?;
    cfg.triplet_chunks = kv.take_or(&k("triplet_chunks"), cfg.triplet_chunks)?;
    let d = Anneal::default();
    let anneal = Anneal {
        lambda0: kv.take_or(&k("lambda0"), d.lambda0)?,
        decay: kv.take_or(&k("lambda_decay"), d.decay)?,
        floor: kv.take_or(&k("lambda_floor"), d.floor)?,
    };
    cfg.anneal = kv.take_or(&k("anneal"), true)?.then_some(anneal);
    cfg.validate()?;
    Ok(cfg)
}

/// Inverse of [`train_config`] with an empty prefix.
pub fn render_train_config(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    if let Some((t, f, e)) = arch_widths(&cfg.arch) {
        line("tdnn_widths", t.map(|w| w.to_string()).join(","));
        line("fc_width", f.to_string());
        line("embed_dim", e.to_string());
    }
    let ctx: Vec<String> = cfg
        .arch
        .layers
        .iter()
        .filter(|l| l.kind == LayerKind::Tdnn)
        .map(|l| l.context.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    line("contexts", ctx.join(";"));
    line("loss", loss_name(cfg.loss).into());
    match cfg.loss {
        LossKind::Softmax => {}
        LossKind::ASoftmax { m } => line("margin_m", m.to_string()),
        LossKind::Triplet { margin, mining } => {
            line("triplet_margin", margin.to_string());
            line("mining", mining_name(mining).into());
        }
    }
    line("seed", cfg.seed.to_string());
    line("minibatch_chunks", cfg.minibatch_chunks.to_string());
    line("chunk_frames", cfg.chunk_frames.to_string());
    line("lr0", cfg.lr0.to_string());
    line("lr_decay", cfg.lr_decay.to_string());
    line("lr_stop", cfg.lr_stop.to_string());
    if let Some(e) = cfg.max_epochs {
        line("max_epochs", e.to_string());
    }
    line("momentum", cfg.momentum.to_string());
    line("weight_decay", cfg.weight_decay.to_string());
    line("bn_momentum", cfg.bn_momentum.to_string());
    line("triplet_speakers", cfg.triplet_speakers.to_string());
    line("triplet_chunks", cfg.triplet_chunks.to_string());
    line("anneal", cfg.anneal.is_some().to_string());
    if let Some(a) = cfg.anneal {
        line("lambda0", a.lambda0.to_string());
        line("lambda_decay", a.decay.to_string());
        line("lambda_floor", a.floor.to_string());
    }
    s
}

pub fn synth_spec(kv: &mut KeyValues, prefix: &str, seed: u64) -> Result<SynthSpec> {
    let k = |s: &str| format!("{prefix}{s}");
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_speakers: kv.take_or(&k("n_speakers"), d.n_speakers)?,
        utts_per_speaker: kv.take_or(&k("utts_per_speaker"), d.utts_per_speaker)?,
        frames_per_utt: kv.take_or(&k("frames_per_utt"), d.frames_per_utt)?,
        dim: kv.take_or(&k("dim"), d.dim)?,
        speaker_spread: kv.take_or(&k("speaker_spread"), d.speaker_spread)?,
        channel_spread: kv.take_or(&k("channel_spread"), d.channel_spread)?,
        frame_noise: kv.take_or(&k("frame_noise"), d.frame_noise)?,
        temporal_mix: kv.take_or(&k("temporal_mix"), d.temporal_mix)?,
        seed: kv.take_or(&k("seed"), seed)?,
        prefix: kv.take_or(&k("prefix"), d.prefix)?,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn render_synth_spec(s: &SynthSpec) -> String {
    format!(
        "n_speakers = {}\nutts_per_speaker = {}\nframes_per_utt = {}\ndim = {}\nspeaker_spread = {}\n\
         channel_spread = {}\nframe_noise = {}\ntemporal_mix = {}\nseed = {}\nprefix = {}\n",
        s.n_speakers,
        s.utts_per_speaker,
        s.frames_per_utt,
        s.dim,
        s.speaker_spread,
        s.channel_spread,
        s.frame_noise,
        s.temporal_mix,
        s.seed,
        s.prefix
    )
}

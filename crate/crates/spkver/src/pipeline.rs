//! End-to-end run: synth -> train (per system) -> extract -> plda-train ->
//! evaluate -> det-plot, all seeded from one root seed.
//!
//! ```text
//! seed = 1
//! systems = softmax, asoftmax, triplet
//! [train_data]          # synth keys, or `archive = path`
//! [eval_data]
//! [plda_data]           # optional held-out PLDA speakers; default: train_data
//! [train]               # shared training keys
//! [system.asoftmax]     # per-system overrides; `loss` defaults to the name
//! [plda]                # iters, length_norm, source = chunks|full, ...
//! [eval]                # protocol, enroll_frames, durations, backends, ...
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spkver_core::backend::{Backend, PldaConfig};
use spkver_core::eval::{run_protocol, Protocol, ProtocolConfig, Report};
use spkver_core::features::FeatureMatrix;
use spkver_core::rng::{derive_seed, tag};
use spkver_core::synth::{generate, SynthSpec};
use spkver_core::trainer::TrainConfig;

use crate::archive::{read_embeddings, read_features, write_embeddings, write_features};
use crate::config::{render_synth_spec, render_train_config, synth_spec, train_config, KeyValues};
use crate::model_io::read_model_file;
use crate::plda_io::{read_plda, write_plda};
use crate::plot::det_plot;
use crate::report::{render_eer_table, write_report};
use crate::stages::{extract_embeddings, run_training, train_plda_from, ExtractMode, TrainOutputs};
use crate::{fingerprint, read_file, write_atomic, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthSpec),
    Archive(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub name: String,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub train_data: DataSource,
    pub eval_data: DataSource,
    pub plda_data: Option<DataSource>,
    pub systems: Vec<SystemConfig>,
    pub plda: PldaConfig,
    pub plda_source: ExtractMode,
    pub eval: ProtocolConfig,
}

fn data_source(kv: &mut KeyValues, prefix: &str, seed: u64, default: SynthSpec) -> Result<DataSource> {
    if let Some(p) = kv.take::<String>(&format!("{prefix}archive"))? {
        return Ok(DataSource::Archive(p.into()));
    }
    let mut sub = kv.take_prefix(prefix);
    let mut base = KeyValues::parse(&render_synth_spec(&SynthSpec { seed, ..default }), "defaults")?;
    base.overlay(std::mem::take(&mut sub));
    let spec = synth_spec(&mut base, "", seed)?;
    base.finish()?;
    Ok(DataSource::Synth(spec))
}

fn parse_protocol(name: &str, enroll_frames: usize) -> Result<Protocol> {
    match name {
        "equal-duration" => Ok(Protocol::EqualDuration),
        "fixed-enroll" => Ok(Protocol::FixedEnroll { enroll_frames }),
        other => Err(Error::Usage(format!("unknown protocol {other:?}"))),
    }
}

pub fn parse_backends(list: &[String]) -> Result<Vec<Backend>> {
    list.iter().map(|b| Backend::parse(b).ok_or_else(|| Error::Usage(format!("unknown back-end {b:?}")))).collect()
}

impl PipelineConfig {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text, context)?;
        let seed: u64 = kv.take_or("seed", 0)?;
        let train_data = data_source(&mut kv, "train_data.", derive_seed(seed, tag("synth-train")), SynthSpec::default())?;
        let eval_default = SynthSpec {
            n_speakers: 50,
            utts_per_speaker: 4,
            frames_per_utt: 2000,
            prefix: "eval".into(),
            ..SynthSpec::default()
        };
        let eval_data = data_source(&mut kv, "eval_data.", derive_seed(seed, tag("synth-eval")), eval_default)?;
        let plda_data = if kv.has_prefix("plda_data.") {
            let base = match &train_data {
                DataSource::Synth(spec) => spec.clone(),
                DataSource::Archive(_) => SynthSpec::default(),
            };
            let default = SynthSpec { prefix: "plda".into(), ..base };
            Some(data_source(&mut kv, "plda_data.", derive_seed(seed, tag("synth-plda")), default)?)
        } else {
            None
        };
        let names: Vec<String> = kv.take_list("systems")?.unwrap_or_else(|| vec!["softmax".into(), "asoftmax".into(), "triplet".into()]);
        if names.is_empty() {
            return Err(Error::Usage("no systems configured".into()));
        }
        let shared = kv.take_prefix("train.");
        let mut systems = Vec::new();
        for name in &names {
            let mut sys = shared.clone();
            let over = kv.take_prefix(&format!("system.{name}."));
            if !over.contains("loss") && !sys.contains("loss") {
                sys.set("loss", name);
            }
            sys.overlay(over);
            let train = train_config(&mut sys, "", derive_seed(seed, tag("train")))?;
            sys.finish()?;
            systems.push(SystemConfig { name: name.clone(), train });
        }
        let plda = PldaConfig {
            iters: kv.take_or("plda.iters", PldaConfig::default().iters)?,
            length_norm: kv.take_or("plda.length_norm", PldaConfig::default().length_norm)?,
        };
        let plda_source = match kv.take_or("plda.source", "chunks".to_string())?.as_str() {
            "full" => ExtractMode::Full,
            "chunks" => ExtractMode::Chunks {
                chunk_frames: kv.take_or("plda.chunk_frames", spkver_core::features::CHUNK_FRAMES)?,
                max_per_utt: kv.take_or("plda.max_chunks_per_utt", 0)?,
                seed: kv.take_or("plda.seed", derive_seed(seed, tag("plda")))?,
            },
            other => return Err(Error::Usage(format!("unknown plda.source {other:?}"))),
        };
        let enroll_frames = kv.take_or("eval.enroll_frames", Protocol::PAPER_ENROLL_FRAMES)?;
        let protocol = parse_protocol(&kv.take_or("eval.protocol", "equal-duration".to_string())?, enroll_frames)?;
        let durations = kv.take_list("eval.durations")?.unwrap_or_else(|| vec![300, 500, 1000, 1500]);
        let backends = parse_backends(&kv.take_list("eval.backends")?.unwrap_or_else(|| {
            vec!["cosine".into(), "euclidean".into(), "plda".into()]
        }))?;
        let mut eval = ProtocolConfig::new(protocol, durations, backends, kv.take_or("eval.seed", derive_seed(seed, tag("eval")))?);
        eval.enroll_per_spk = kv.take_or("eval.enroll_per_spk", eval.enroll_per_spk)?;
        eval.test_per_spk = kv.take_or("eval.test_per_spk", eval.test_per_spk)?;
        kv.finish()?;
        Ok(Self { seed, train_data, eval_data, plda_data, systems, plda, plda_source, eval })
    }

    /// Fully resolved configuration in the same syntax.
    pub fn render(&self) -> String {
        let mut s = format!("seed = {}\n", self.seed);
        let names: Vec<&str> = self.systems.iter().map(|x| x.name.as_str()).collect();
        writeln!(s, "systems = {}", names.join(", ")).unwrap();
        let sources = [("train_data", Some(&self.train_data)), ("eval_data", Some(&self.eval_data)), ("plda_data", self.plda_data.as_ref())];
        for (sec, src) in sources.into_iter().filter_map(|(n, s)| Some((n, s?))) {
            writeln!(s, "\n[{sec}]").unwrap();
            match src {
                DataSource::Synth(spec) => s.push_str(&render_synth_spec(spec)),
                DataSource::Archive(p) => writeln!(s, "archive = {}", p.display()).unwrap(),
            }
        }
        for sys in &self.systems {
            writeln!(s, "\n[system.{}]", sys.name).unwrap();
            s.push_str(&render_train_config(&sys.train));
        }
        writeln!(s, "\n[plda]\niters = {}\nlength_norm = {}", self.plda.iters, self.plda.length_norm).unwrap();
        match self.plda_source {
            ExtractMode::Full => s.push_str("source = full\n"),
            ExtractMode::Chunks { chunk_frames, max_per_utt, seed } => writeln!(
                s,
                "source = chunks\nchunk_frames = {chunk_frames}\nmax_chunks_per_utt = {max_per_utt}\nseed = {seed}"
            )
            .unwrap(),
        }
        let e = &self.eval;
        writeln!(s, "\n[eval]\nprotocol = {}", e.protocol.name()).unwrap();
        if let Protocol::FixedEnroll { enroll_frames } = e.protocol {
            writeln!(s, "enroll_frames = {enroll_frames}").unwrap();
        }
        let durs: Vec<String> = e.durations.iter().map(|d| d.to_string()).collect();
        let backs: Vec<&str> = e.backends.iter().map(|b| b.name()).collect();
        writeln!(
            s,
            "durations = {}\nbackends = {}\nenroll_per_spk = {}\ntest_per_spk = {}\nseed = {}",
            durs.join(", "),
            backs.join(", "),
            e.enroll_per_spk,
            e.test_per_spk,
            e.seed
        )
        .unwrap();
        s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub reports: Vec<(String, Report)>,
}

impl PipelineSummary {
    pub fn eer(&self, system: &str, duration: usize, backend: Backend) -> Option<f64> {
        self.reports.iter().find(|(n, _)| n == system).and_then(|(_, r)| r.eer(duration, backend))
    }
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| e.in_stage(name))
}

fn load_data(src: &DataSource, out: &Path) -> Result<Vec<FeatureMatrix>> {
    match src {
        DataSource::Archive(p) => read_features(p),
        DataSource::Synth(spec) => {
            write_features(out, &generate(spec)?)?;
            read_features(out)
        }
    }
}

pub fn pipeline_run(cfg: &PipelineConfig, out: &Path) -> Result<PipelineSummary> {
    log::info!("resolved pipeline config:\n{}", cfg.render());
    let (train_data, eval_data, plda_data) = stage("synth", || {
        let plda = cfg.plda_data.as_ref().map(|src| load_data(src, &out.join("data/plda.fea"))).transpose()?;
        Ok((load_data(&cfg.train_data, &out.join("data/train.fea"))?, load_data(&cfg.eval_data, &out.join("data/eval.fea"))?, plda))
    })?;
    let plda_data = plda_data.as_deref().unwrap_or(&train_data);
    let mut reports = Vec::new();
    for sys in &cfg.systems {
        let model_path = out.join("models").join(format!("{}.net", sys.name));
        stage("train", || {
            let outputs = TrainOutputs {
                model: Some(model_path.clone()),
                checkpoints: None,
                metrics: Some(out.join("models").join(format!("{}_metrics.csv", sys.name))),
            };
            run_training(&sys.train, &train_data, None, &outputs).map(|_| ())
        })?;
        let model = stage("extract", || {
            let model = read_model_file(&model_path)?;
            let sets = extract_embeddings(&model, plda_data, cfg.plda_source)?;
            write_embeddings(&out.join("embeddings").join(format!("{}_plda.emb", sys.name)), &sets)?;
            Ok(model)
        })?;
        let plda = stage("plda-train", || {
            let sets = read_embeddings(&out.join("embeddings").join(format!("{}_plda.emb", sys.name)))?;
            let p = out.join("models").join(format!("{}.plda", sys.name));
            write_plda(&p, &train_plda_from(&sets, &cfg.plda)?)?;
            read_plda(&p)
        })?;
        let report = stage("evaluate", || {
            let r = run_protocol(&cfg.eval, &model.net, Some(&plda), &eval_data)?;
            write_report(out, &sys.name, &r)?;
            Ok(r)
        })?;
        reports.push((sys.name.clone(), report));
    }
    stage("det-plot", || {
        write_atomic(&out.join("reports/eer.csv"), render_eer_table(&reports).as_bytes())?;
        for &d in &cfg.eval.durations {
            let mut csvs = Vec::new();
            for (name, r) in &reports {
                for c in r.conditions.iter().filter(|c| c.duration == d) {
                    let p = out.join("det").join(format!("{}.csv", crate::report::condition_stem(name, c)));
                    if p.exists() {
                        csvs.push(p);
                    }
                }
            }
            if !csvs.is_empty() {
                let refs: Vec<&Path> = csvs.iter().map(PathBuf::as_path).collect();
                det_plot(&refs, &out.join("plots").join(format!("det_{}_{d}.svg", cfg.eval.protocol.name())))?;
            }
        }
        Ok(())
    })?;
    stage("manifest", || write_manifest(cfg, out))?;
    Ok(PipelineSummary { reports })
}

fn collect_files(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .and_then(|rd| rd.map(|e| e.map(|e| e.path())).collect())
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, root, out)?;
        } else if p.file_name().is_some_and(|n| n != "manifest.txt") {
            out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
        }
    }
    Ok(())
}

/// Versions, the resolved config with every derived seed, and a
/// fingerprint per artifact. No timestamps, so reruns are byte-identical.
fn write_manifest(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let mut s = format!("spkver {}\nformat FEA1 EMB1 NET1 PLDA v1\n\n", env!("CARGO_PKG_VERSION"));
    s.push_str(&cfg.render());
    s.push_str("\n[artifacts]\n");
    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    for f in files {
        let bytes = read_file(&out.join(&f))?;
        writeln!(s, "{} = {:016x} {}", f.display(), fingerprint(&bytes), bytes.len()).unwrap();
    }
    write_atomic(&out.join("manifest.txt"), s.as_bytes())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spkver::archive::{read_embeddings, read_features, write_embeddings, write_features};
use spkver::config::{render_synth_spec, render_train_config, synth_spec, train_config, KeyValues};
use spkver::model_io::{read_checkpoint, read_model_file};
use spkver::pipeline::{parse_backends, pipeline_run, PipelineConfig};
use spkver::plda_io::{read_plda, write_plda};
use spkver::report::{render_eer_table, write_report};
use spkver::stages::{extract_embeddings, featurize_dir, run_training, train_plda_from, ExtractMode, TrainOutputs};
use spkver::{read_text, write_atomic, Error, Result};
use spkver_core::backend::{Backend, PldaConfig};
use spkver_core::eval::{run_protocol, Protocol, ProtocolConfig};
use spkver_core::features::{VadConfig, DEFAULT_CMN_WINDOW};
use spkver_core::synth::generate;

#[derive(Parser, Debug)]
#[command(name = "spkver", version, about = "Speaker verification with angular-margin embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic feature archive.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// MFCC + energy VAD + sliding CMN over a directory of WAV files.
    Featurize {
        #[arg(long)]
        wav_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        vad_offset: f64,
        #[arg(long, default_value_t = DEFAULT_CMN_WINDOW)]
        cmn_window: usize,
    },
    /// Train an embedding network.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        /// Defaults to `<out-model>.ckpt/`.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Defaults to `<out-model>.metrics.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Embed utterances (whole, or per chunk for PLDA training).
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full", value_parser = ["full", "chunks"])]
        mode: String,
        #[arg(long, default_value_t = spkver_core::features::CHUNK_FRAMES)]
        chunk_frames: usize,
        /// 0 keeps every chunk.
        #[arg(long, default_value_t = 0)]
        max_chunks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a two-covariance PLDA model on an embedding archive.
    PldaTrain {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long)]
        no_length_norm: bool,
    },
    /// Score trials and report EER per duration and back-end.
    Evaluate {
        #[arg(long, value_parser = ["equal-duration", "fixed-enroll"])]
        protocol: String,
        /// Comma-separated frame counts.
        #[arg(long, value_delimiter = ',', required = true)]
        durations: Vec<usize>,
        /// Comma-separated: cosine, euclidean, plda.
        #[arg(long, value_delimiter = ',', required = true)]
        backend: Vec<String>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        plda: Option<PathBuf>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = Protocol::PAPER_ENROLL_FRAMES)]
        enroll_frames: usize,
        #[arg(long, default_value = "system")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Probit-warped DET plot (SVG) of DET-point CSVs.
    DetPlot {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Run every stage from one config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { spec, out, seed } => {
            let mut kv = KeyValues::parse(&read_text(&spec)?, &spec.display().to_string())?;
            if let Some(s) = seed {
                kv.set("seed", s);
            }
            let spec = synth_spec(&mut kv, "", 0)?;
            kv.finish()?;
            log::info!("synth spec (seed {}):\n{}", spec.seed, render_synth_spec(&spec));
            write_features(&out, &generate(&spec)?)
        }
        Command::Featurize { wav_dir, out, vad_offset, cmn_window } => {
            let vad = VadConfig { offset: vad_offset, ..VadConfig::default() };
            log::info!("featurize: {vad:?}, cmn window {cmn_window}, {:?} (no randomness)", spkver_core::features::FeatureConfig::default());
            let data = featurize_dir(&wav_dir, &vad, cmn_window)?;
            log::info!("{} utterances", data.len());
            write_features(&out, &data)
        }
        Command::Train { config, features, out_model, checkpoint_dir, metrics, resume, seed } => {
            let mut kv = KeyValues::parse(&read_text(&config)?, &config.display().to_string())?;
            if let Some(s) = seed {
                kv.set("seed", s);
            }
            let cfg = train_config(&mut kv, "", 0)?;
            kv.finish()?;
            log::info!("train config (seed {}):\n{}", cfg.seed, render_train_config(&cfg));
            let data = read_features(&features)?;
            let from = resume.map(|p| read_checkpoint(&p)).transpose()?;
            let outputs = TrainOutputs {
                checkpoints: Some(checkpoint_dir.unwrap_or_else(|| with_suffix(&out_model, ".ckpt"))),
                metrics: Some(metrics.unwrap_or_else(|| with_suffix(&out_model, ".metrics.csv"))),
                model: Some(out_model),
            };
            run_training(&cfg, &data, from, &outputs).map(|_| ())
        }
        Command::Extract { model, features, out, mode, chunk_frames, max_chunks, seed } => {
            let mode = match mode.as_str() {
                "chunks" => ExtractMode::Chunks { chunk_frames, max_per_utt: max_chunks, seed },
                _ => ExtractMode::Full,
            };
            log::info!("extract: {mode:?}");
            let model = read_model_file(&model)?;
            write_embeddings(&out, &extract_embeddings(&model, &read_features(&features)?, mode)?)
        }
        Command::PldaTrain { embeddings, out, iters, no_length_norm } => {
            let cfg = PldaConfig { iters, length_norm: !no_length_norm };
            log::info!("plda: {cfg:?}");
            write_plda(&out, &train_plda_from(&read_embeddings(&embeddings)?, &cfg)?)
        }
        Command::Evaluate { protocol, durations, backend, model, plda, features, out_dir, enroll_frames, name, seed } => {
            let protocol = match protocol.as_str() {
                "fixed-enroll" => Protocol::FixedEnroll { enroll_frames },
                _ => Protocol::EqualDuration,
            };
            let backends = parse_backends(&backend)?;
            if backends.contains(&Backend::Plda) && plda.is_none() {
                return Err(Error::Usage("--backend plda needs --plda".into()));
            }
            let cfg = ProtocolConfig::new(protocol, durations, backends, seed);
            log::info!("evaluate: {cfg:?}");
            let model = read_model_file(&model)?;
            let plda = plda.map(|p| read_plda(&p)).transpose()?;
            let report = run_protocol(&cfg, &model.net, plda.as_ref(), &read_features(&features)?)?;
            write_report(&out_dir, &name, &report)?;
            let table = render_eer_table(&[(name, report)]);
            print!("{table}");
            write_atomic(&out_dir.join("eer.csv"), table.as_bytes())
        }
        Command::DetPlot { out, csv } => {
            let refs: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            spkver::plot::det_plot(&refs, &out)
        }
        Command::Pipeline { config, out_dir } => {
            let cfg = PipelineConfig::parse(&read_text(&config)?, &config.display().to_string())?;
            let summary = pipeline_run(&cfg, &out_dir)?;
            print!("{}", render_eer_table(&summary.reports));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! WAV input for the featurize stage. Only 16-bit PCM mono is accepted;
//! samples keep their integer scale.

use std::path::{Path, PathBuf};

use spkver_core::features::Waveform;

use crate::{Error, Result};

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let ctx = path.display().to_string();
    let reader = hound::WavReader::open(path).map_err(|e| Error::format(&ctx, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::format(
            &ctx,
            format!("need 16-bit PCM mono, found {} channel(s) at {} bits", spec.channels, spec.bits_per_sample),
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(f64::from))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(&ctx, e.to_string()))?;
    Ok(Waveform { samples, sample_rate: spec.sample_rate })
}

pub fn write_wav(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let ctx = path.display().to_string();
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::format(&ctx, e.to_string()))?;
    for &s in samples {
        w.write_sample(s).map_err(|e| Error::format(&ctx, e.to_string()))?;
    }
    w.finalize().map_err(|e| Error::format(&ctx, e.to_string()))
}

/// A WAV file with its utterance and speaker ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WavEntry {
    pub path: PathBuf,
    pub utterance_id: String,
    pub speaker_id: String,
}

/// Lists `dir/<speaker>/<utt>.wav`, plus `dir/<speaker>-<rest>.wav` at the
/// top level, sorted by utterance id.
pub fn scan_wav_dir(dir: &Path) -> Result<Vec<WavEntry>> {
    let mut out = Vec::new();
    for entry in read_dir_sorted(dir)? {
        if entry.is_dir() {
            let speaker = file_name(&entry);
            for f in read_dir_sorted(&entry)? {
                if is_wav(&f) {
                    let stem = stem(&f);
                    out.push(WavEntry { utterance_id: format!("{speaker}-{stem}"), speaker_id: speaker.clone(), path: f });
                }
            }
        } else if is_wav(&entry) {
            let stem = stem(&entry);
            let speaker = stem.split('-').next().unwrap_or(&stem).to_string();
            out.push(WavEntry { utterance_id: stem, speaker_id: speaker, path: entry });
        }
    }
    if out.is_empty() {
        return Err(Error::format(dir.display().to_string(), "no .wav files found"));
    }
    out.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    Ok(out)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = std::fs::read_dir(dir)
        .and_then(|rd| rd.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>())
        .map_err(|e| Error::io(dir, e))?;
    v.sort();
    Ok(v)
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

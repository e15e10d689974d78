//! Text outputs of an evaluation: trial list, score files, the EER table and
//! per-condition DET points.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spkver_core::eval::{det_curve, Condition, DetCurve, DetPoint, Report};

use crate::{read_file, write_atomic, Error, Result};

/// `enroll_utt test_utt target|nontarget` per line.
pub fn render_trials(report: &Report) -> String {
    let mut s = String::new();
    for t in &report.trials.trials {
        let label = if t.target { "target" } else { "nontarget" };
        writeln!(s, "{} {} {label}", report.utterance_ids[t.enroll].0, report.utterance_ids[t.test].0).unwrap();
    }
    s
}

/// `enroll_utt test_utt score` per scored trial, shortest round-trip decimal.
pub fn render_scores(report: &Report, cond: &Condition) -> String {
    let mut s = String::new();
    for (t, score) in report.trials.trials.iter().zip(&cond.scores) {
        if let Some(v) = score {
            writeln!(s, "{} {} {v:?}", report.utterance_ids[t.enroll].0, report.utterance_ids[t.test].0).unwrap();
        }
    }
    s
}

/// Scores and labels of the trials that received a score.
pub fn scored_trials(report: &Report, cond: &Condition) -> (Vec<f64>, Vec<bool>) {
    cond.scores.iter().zip(&report.trials.trials).filter_map(|(s, t)| s.map(|s| (s, t.target))).unzip()
}

/// One row per system and back-end, one EER (%) column per duration.
pub fn render_eer_table(systems: &[(String, Report)]) -> String {
    let mut durations: Vec<usize> = Vec::new();
    for (_, r) in systems {
        for c in &r.conditions {
            if !durations.contains(&c.duration) {
                durations.push(c.duration);
            }
        }
    }
    let header: Vec<String> = durations.iter().map(|d| d.to_string()).collect();
    let mut s = format!("system,backend,protocol,{}\n", header.join(","));
    for (system, report) in systems {
        let mut backends = Vec::new();
        for c in &report.conditions {
            if !backends.contains(&c.backend) {
                backends.push(c.backend);
            }
        }
        for b in backends {
            let cells: Vec<String> = durations
                .iter()
                .map(|&d| report.eer(d, b).map_or(String::new(), |e| format!("{:.4}", 100.0 * e)))
                .collect();
            writeln!(s, "{system},{},{},{}", b.name(), report.protocol.name(), cells.join(",")).unwrap();
        }
    }
    s
}

pub fn render_det(curve: &DetCurve) -> String {
    let mut s = String::from("threshold,fa,miss\n");
    for p in &curve.points {
        writeln!(s, "{:?},{:?},{:?}", p.threshold, p.fa, p.miss).unwrap();
    }
    s
}

pub fn parse_det(text: &str, ctx: &str) -> Result<DetCurve> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "threshold,fa,miss" => {}
        _ => return Err(Error::format(ctx, "missing threshold,fa,miss header")),
    }
    let points = lines
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<f64> = l.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| Error::format(ctx, format!("line {}: bad number", i + 2)))?;
            match v[..] {
                [threshold, fa, miss] if (0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&miss) => {
                    Ok(DetPoint { threshold, fa, miss })
                }
                _ => Err(Error::format(ctx, format!("line {}: expected threshold,fa,miss in [0,1]", i + 2))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        return Err(Error::format(ctx, "empty DET csv"));
    }
    Ok(DetCurve { points })
}

pub fn read_det(path: &Path) -> Result<DetCurve> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| Error::format(path.display().to_string(), "not UTF-8"))?;
    parse_det(&text, &path.display().to_string())
}

/// File stem for a condition, e.g. `asoftmax_plda_300`.
pub fn condition_stem(system: &str, cond: &Condition) -> String {
    format!("{system}_{}_{}", cond.backend.name(), cond.duration)
}

/// Writes `trials.txt`, `scores/<stem>.txt` and `det/<stem>.csv` under
/// `dir`; returns the DET files.
pub fn write_report(dir: &Path, system: &str, report: &Report) -> Result<Vec<PathBuf>> {
    write_atomic(&dir.join("trials.txt"), render_trials(report).as_bytes())?;
    let mut dets = Vec::new();
    for cond in &report.conditions {
        let stem = condition_stem(system, cond);
        write_atomic(&dir.join("scores").join(format!("{stem}.txt")), render_scores(report, cond).as_bytes())?;
        let (scores, labels) = scored_trials(report, cond);
        match det_curve(&scores, &labels) {
            Ok(curve) => {
                let p = dir.join("det").join(format!("{stem}.csv"));
                write_atomic(&p, render_det(&curve).as_bytes())?;
                dets.push(p);
            }
            Err(spkver_core::Error::SingleClassScores) => log::warn!("{stem}: no DET curve, one trial class only"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(dets)
}

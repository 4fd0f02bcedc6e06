//! Automatic metrics: next-note accuracy, dance–music correlation and flatness.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::music::GeneratorTag;
use crate::pose::DanceSequence;
use crate::simcorr::global_correlation;

/// Share of decided notes (every index but the fixed first) equal to the labels.
pub fn next_note_accuracy(pred: &[u8], labels: &[u8]) -> Result<f64> {
    if pred.len() != labels.len() {
        return Err(invalid(format!(
            "prediction length {} != label length {}",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(invalid("empty sequences"));
    }
    if pred.len() == 1 {
        return Ok(1.0);
    }
    let hits = pred[1..].iter().zip(&labels[1..]).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / (pred.len() - 1) as f64)
}

/// Mean global correlation over `(dance, notes)` pairs.
pub fn mean_correlation(corpus: &[(DanceSequence, Vec<u8>)], k: usize) -> Result<f64> {
    if corpus.is_empty() {
        return Err(invalid("empty corpus"));
    }
    let mut sum = 0.0;
    for (d, notes) in corpus {
        sum += global_correlation(d, notes, k)?;
    }
    Ok(sum / corpus.len() as f64)
}

/// Number of note changes.
pub fn flatness(notes: &[u8]) -> usize {
    notes.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Metrics for one generated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub video_id: String,
    pub generator: GeneratorTag,
    pub correlation: f64,
    /// Agreement with the offline labels.
    pub accuracy: f64,
    pub flatness: usize,
}

impl EvalRow {
    pub fn new(
        dance: &DanceSequence,
        generator: GeneratorTag,
        notes: &[u8],
        labels: &[u8],
        k: usize,
    ) -> Result<Self> {
        Ok(EvalRow {
            video_id: dance.source_id.clone(),
            generator,
            correlation: global_correlation(dance, notes, k)?,
            accuracy: next_note_accuracy(notes, labels)?,
            flatness: flatness(notes),
        })
    }
}

/// Per-generator means, in first-seen order.
pub fn summarize(rows: &[EvalRow]) -> Vec<(GeneratorTag, f64, f64, f64)> {
    let mut order: Vec<GeneratorTag> = Vec::new();
    for r in rows {
        if !order.contains(&r.generator) {
            order.push(r.generator);
        }
    }
    order
        .into_iter()
        .map(|g| {
            let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.generator == g).collect();
            let n = sel.len() as f64;
            (
                g,
                sel.iter().map(|r| r.correlation).sum::<f64>() / n,
                sel.iter().map(|r| r.accuracy).sum::<f64>() / n,
                sel.iter().map(|r| r.flatness as f64).sum::<f64>() / n,
            )
        })
        .collect()
}

/// CSV report with one row per sequence and a `mean` row per generator.
pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("video_id,generator,correlation,accuracy,flatness\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.video_id, r.generator, r.correlation, r.accuracy, r.flatness
        );
    }
    for (g, corr, acc, flat) in summarize(rows) {
        let _ = writeln!(out, "mean,{g},{corr},{acc},{flat}");
    }
    out
}

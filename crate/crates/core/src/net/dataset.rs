//! Training examples distilled from offline labels, and their on-disk format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, Scalar};
use crate::error::{invalid, Error, Result};
use crate::music::check_ordinal;
use crate::pose::DanceSequence;
use crate::simcorr::{dance_sim_matrix, SimMatrix};

const MAGIC: &[u8; 4] = b"D2MD";
const VERSION: u32 = 1;
const PAD: u8 = u8::MAX;

/// One next-note prediction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<T = f32> {
    /// `window_frames²` similarity values, zero-padded at the top-left when
    /// less history is available.
    pub dance_window: Vec<T>,
    /// The `window_notes` previous notes, oldest first; `None` is padding.
    pub note_history: Vec<Option<u8>>,
    pub target: u8,
}

impl<T: Scalar> TrainingExample<T> {
    pub fn cast<U: Scalar>(&self) -> TrainingExample<U> {
        TrainingExample {
            dance_window: self
                .dance_window
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().expect("finite")))
                .collect(),
            note_history: self.note_history.clone(),
            target: self.target,
        }
    }

    /// Note history as one-hot vectors (padding is all zeros).
    pub fn note_one_hot(&self) -> Vec<[T; 5]> {
        self.note_history
            .iter()
            .map(|n| {
                let mut v = [T::zero(); 5];
                if let Some(n) = n {
                    v[*n as usize] = T::one();
                }
                v
            })
            .collect()
    }
}

/// Places the `m × m` block given by `value` at the bottom-right of a
/// `side × side` zero matrix.
pub(crate) fn padded_window<T: Scalar>(
    side: usize,
    m: usize,
    mut value: impl FnMut(usize, usize) -> f64,
) -> Vec<T> {
    let mut out = vec![T::zero(); side * side];
    let off = side - m;
    for i in 0..m {
        for j in 0..m {
            out[(off + i) * side + off + j] = T::from_f64_lossy(value(i, j));
        }
    }
    out
}

/// Dance input for predicting note `t`: similarities over frames
/// `[max(0, t − W)·k, t·k)` of `matrix`, which must start at frame 0.
pub fn dance_window<T: Scalar>(matrix: &SimMatrix, t: usize, cfg: &ModelConfig) -> Result<Vec<T>> {
    let k = cfg.k();
    let (lo, hi) = (t.saturating_sub(cfg.window_notes) * k, t * k);
    if hi > matrix.size() {
        return Err(invalid(format!(
            "note {t} needs {hi} frames, matrix has {}",
            matrix.size()
        )));
    }
    Ok(padded_window(cfg.window_frames, hi - lo, |i, j| {
        matrix.get(lo + i, lo + j)
    }))
}

/// Notes `[max(0, t − W), t)` left-padded to `W` entries.
pub(crate) fn note_history(notes: &[u8], t: usize, window: usize) -> Vec<Option<u8>> {
    let lo = t.saturating_sub(window);
    let mut h = vec![None; window - (t - lo)];
    h.extend(notes[lo..t].iter().map(|&n| Some(n)));
    h
}

/// One example per note after the first, pairing the preceding context with
/// the offline label.
pub fn build_examples(
    d: &DanceSequence,
    labels: &[u8],
    cfg: &ModelConfig,
) -> Result<Vec<TrainingExample<f32>>> {
    cfg.validate()?;
    let k = cfg.k();
    let len = d.len() / k;
    if labels.len() != len {
        return Err(invalid(format!(
            "{} labels for a dance of {len} notes",
            labels.len()
        )));
    }
    for &l in labels {
        check_ordinal(l)?;
    }
    if len < 2 {
        return Ok(Vec::new());
    }
    let matrix = dance_sim_matrix(d, Some(0..len * k))?;
    (1..len)
        .map(|t| {
            Ok(TrainingExample {
                dance_window: dance_window(&matrix, t, cfg)?,
                note_history: note_history(labels, t, cfg.window_notes),
                target: labels[t],
            })
        })
        .collect()
}

pub fn write_dataset(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    examples: &[TrainingExample<f32>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(cfg.window_frames as u32).to_le_bytes())?;
    w.write_all(&(cfg.window_notes as u32).to_le_bytes())?;
    w.write_all(&(examples.len() as u64).to_le_bytes())?;
    for ex in examples {
        if ex.dance_window.len() != cfg.window_frames * cfg.window_frames
            || ex.note_history.len() != cfg.window_notes
        {
            return Err(invalid("example shape does not match the config"));
        }
        for v in &ex.dance_window {
            w.write_all(&v.to_le_bytes())?;
        }
        let notes: Vec<u8> = ex.note_history.iter().map(|n| n.unwrap_or(PAD)).collect();
        w.write_all(&notes)?;
        w.write_all(&[ex.target])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset; returns `(window_frames, window_notes, examples)`.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<TrainingExample<f32>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let fmt = |e: std::io::Error| Error::Format(format!("truncated dataset: {e}"));
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(fmt)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic, not a dataset file".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().expect("4 bytes"));
    if u32_at(4) != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {}", u32_at(4))));
    }
    let (side, window) = (u32_at(8) as usize, u32_at(12) as usize);
    let count = u64::from_le_bytes(head[16..24].try_into().expect("8 bytes")) as usize;
    let mut buf = vec![0u8; side * side * 4 + window + 1];
    let mut examples = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(fmt)?;
        let (vals, rest) = buf.split_at(side * side * 4);
        let dance_window = vals
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let note_history = rest[..window]
            .iter()
            .map(|&n| match n {
                PAD => Ok(None),
                n => check_ordinal(n).map(Some),
            })
            .collect::<Result<_>>()?;
        let target = check_ordinal(rest[window])?;
        examples.push(TrainingExample {
            dance_window,
            note_history,
            target,
        });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes in dataset".into()));
    }
    Ok((side, window, examples))
}

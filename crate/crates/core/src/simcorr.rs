//! Self-similarity matrices for dance and music and the correlation objective
//! that ties them together.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{invalid, Result};
use crate::music::{check_ordinal, NUM_NOTES};
use crate::pose::DanceSequence;

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-12;
/// Variances below this make a correlation degenerate (reported as 0).
pub const ZERO_VARIANCE: f64 = 1e-18;

/// A square, symmetric similarity matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimMatrix {
    /// Fills the upper triangle with `f(i, j)` (i ≤ j) and mirrors it.
    pub fn symmetric_from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        SimMatrix { n, values }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Row-major vectorization of the full matrix.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5) heatmap with `lo..=hi` mapped linearly onto 0..=255.
    pub fn to_pgm(&self, lo: f64, hi: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.n, self.n).into_bytes();
        let span = if hi > lo { hi - lo } else { 1.0 };
        out.extend(
            self.values
                .iter()
                .map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Cosine similarity. A zero vector is similar to nothing except another zero vector.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    match (na < ZERO_NORM, nb < ZERO_NORM) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(-1.0, 1.0),
    }
}

/// Pairwise cosine similarities of the poses in `range` (all frames when `None`).
pub fn dance_sim_matrix(d: &DanceSequence, range: Option<Range<usize>>) -> Result<SimMatrix> {
    let range = range.unwrap_or(0..d.len());
    if range.start >= range.end {
        return Err(invalid("empty frame range"));
    }
    if range.end > d.len() {
        return Err(invalid(format!(
            "frame range {range:?} exceeds dance length {}",
            d.len()
        )));
    }
    let frames = &d.frames[range];
    Ok(SimMatrix::symmetric_from_fn(frames.len(), |i, j| {
        if i == j {
            // Self-similarity is exact; the zero-vector rule also yields 1 here.
            1.0
        } else {
            cosine_unchecked(frames[i].as_ref(), frames[j].as_ref())
        }
    }))
}

/// Note similarity `1 − |a − b| / 4` between two ordinals.
pub fn note_similarity(a: u8, b: u8) -> f64 {
    1.0 - (a as f64 - b as f64).abs() / (NUM_NOTES - 1) as f64
}

/// Music similarity matrix of an ordinal note sequence.
pub fn music_sim_matrix(notes: &[u8]) -> Result<SimMatrix> {
    for &n in notes {
        check_ordinal(n)?;
    }
    Ok(SimMatrix::symmetric_from_fn(notes.len(), |i, j| {
        note_similarity(notes[i], notes[j])
    }))
}

/// Nearest-neighbour upsampling of `m` to `target × target`.
pub fn nn_resize(m: &SimMatrix, target: usize) -> Result<SimMatrix> {
    let s = m.size();
    if s == 0 {
        return Err(invalid("cannot resize an empty matrix"));
    }
    if target < s {
        return Err(invalid(format!("target size {target} smaller than source {s}")));
    }
    Ok(SimMatrix::symmetric_from_fn(target, |a, b| {
        m.get(a * s / target, b * s / target)
    }))
}

/// Pearson correlation; 0 when either side has (near-)zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(invalid("pearson needs at least two samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx / n < ZERO_VARIANCE || syy / n < ZERO_VARIANCE {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between a dance matrix and the upsampled music matrix of `notes`,
/// where each note spans `k` frames.
pub fn dance_music_corr(d: &SimMatrix, notes: &[u8], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    if d.size() != notes.len() * k {
        return Err(invalid(format!(
            "dance matrix size {} != {} notes x k={k}",
            d.size(),
            notes.len()
        )));
    }
    if notes.is_empty() {
        return Err(invalid("no notes"));
    }
    let music = nn_resize(&music_sim_matrix(notes)?, d.size())?;
    if d.size() < 2 {
        // A 1x1 matrix has a single sample and no defined correlation.
        return Ok(0.0);
    }
    pearson(d.values(), music.values())
}

/// Global correlation of `notes` against the first `notes.len()·k` frames of `dance`.
pub fn global_correlation(dance: &DanceSequence, notes: &[u8], k: usize) -> Result<f64> {
    if notes.is_empty() {
        return Ok(0.0);
    }
    let n = notes.len() * k;
    let d = dance_sim_matrix(dance, Some(0..n))?;
    dance_music_corr(&d, notes, k)
}

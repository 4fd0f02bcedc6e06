//! Note-by-note inference, both over a whole dance and over a live stream.

use std::collections::VecDeque;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{dance_window, note_history, padded_window};
use super::{forward, ModelConfig, ModelParams};
use crate::error::{invalid, Error, Result};
use crate::music::FIRST_NOTE;
use crate::pose::{DanceSequence, PoseFrame};
use crate::simcorr::{cosine_unchecked, dance_sim_matrix};

/// How a note is chosen from the logits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Argmax,
    Temperature { tau: f64, seed: u64 },
}


impl Sampling {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Sampling::Argmax => Ok(()),
            Sampling::Temperature { tau, .. } if tau > 0.0 && tau.is_finite() => Ok(()),
            Sampling::Temperature { tau, .. } => {
                Err(invalid(format!("temperature must be positive, got {tau}")))
            }
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        match *self {
            Sampling::Argmax => ChaCha8Rng::seed_from_u64(0),
            Sampling::Temperature { seed, .. } => ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl FromStr for Sampling {
    type Err = Error;

    /// `argmax` or `temp:<tau>`; the seed is set separately.
    fn from_str(s: &str) -> Result<Self> {
        if s == "argmax" {
            return Ok(Sampling::Argmax);
        }
        let tau = s
            .strip_prefix("temp:")
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| invalid(format!("bad sampling `{s}` (argmax | temp:<tau>)")))?;
        let s = Sampling::Temperature { tau, seed: 0 };
        s.validate()?;
        Ok(s)
    }
}

/// Index of the largest logit; ties go to the lower ordinal.
pub(crate) fn argmax(logits: &[f32]) -> u8 {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as u8
}

/// Picks a note from `logits` under `sampling`, drawing from `rng` when sampling.
pub fn select_note(logits: &[f32], sampling: &Sampling, rng: &mut impl Rng) -> u8 {
    match *sampling {
        Sampling::Argmax => argmax(logits),
        Sampling::Temperature { tau, .. } => {
            let scaled: Vec<f64> = logits.iter().map(|&l| l as f64 / tau).collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i as u8;
                }
                u -= w;
            }
            argmax(logits)
        }
    }
}

/// Rolling pose and note history for one live stream.
///
/// Holds at most `(window_notes + 1)·k` frames and `window_notes` notes.
#[derive(Debug, Clone)]
pub struct OnlineGenerator {
    cfg: ModelConfig,
    sampling: Sampling,
    rng: ChaCha8Rng,
    frames: VecDeque<PoseFrame>,
    notes: VecDeque<u8>,
    frames_received: usize,
    notes_emitted: usize,
}

impl OnlineGenerator {
    pub fn new(cfg: &ModelConfig, sampling: Sampling) -> Result<Self> {
        cfg.validate()?;
        sampling.validate()?;
        Ok(OnlineGenerator {
            cfg: cfg.clone(),
            sampling,
            rng: sampling.rng(),
            frames: VecDeque::with_capacity(cfg.window_frames + cfg.k()),
            notes: VecDeque::with_capacity(cfg.window_notes),
            frames_received: 0,
            notes_emitted: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.cfg.k()
    }

    pub fn frames_received(&self) -> usize {
        self.frames_received
    }

    pub fn notes_emitted(&self) -> usize {
        self.notes_emitted
    }

    pub fn buffered_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn buffered_notes(&self) -> usize {
        self.notes.len()
    }

    /// True when a full interval has arrived since the last note.
    pub fn ready(&self) -> bool {
        self.frames_received >= (self.notes_emitted + 1) * self.k()
    }

    /// Appends a frame and returns the note it completes, if any.
    pub fn push_frame(&mut self, params: &ModelParams, frame: PoseFrame) -> Result<Option<u8>> {
        let cap = self.cfg.window_frames + self.k();
        if self.frames.len() == cap {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        self.frames_received += 1;
        let Some(note) = predict_next(params, self)? else {
            return Ok(None);
        };
        if self.notes.len() == self.cfg.window_notes {
            self.notes.pop_front();
        }
        self.notes.push_back(note);
        self.notes_emitted += 1;
        Ok(Some(note))
    }
}

/// Chooses the next note from the live history, or `None` until a full
/// interval has arrived. The first note is always E4.
pub fn predict_next(params: &ModelParams, state: &mut OnlineGenerator) -> Result<Option<u8>> {
    if !state.ready() {
        return Ok(None);
    }
    let t = state.notes_emitted;
    if t == 0 {
        return Ok(Some(FIRST_NOTE));
    }
    if !params.config.same_architecture(&state.cfg) {
        return Err(invalid("model does not match the generator's configuration"));
    }
    let k = state.k();
    let w = state.cfg.window_notes;
    let (lo, hi) = (t.saturating_sub(w) * k, t * k);
    let front = state.frames_received - state.frames.len();
    debug_assert!(lo >= front);
    let frames: Vec<&PoseFrame> = state.frames.range(lo - front..hi - front).collect();
    let window: Vec<f32> = padded_window(state.cfg.window_frames, frames.len(), |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            1.0
        } else {
            cosine_unchecked(frames[a].as_ref(), frames[b].as_ref())
        }
    });
    let recent: Vec<u8> = state.notes.iter().copied().collect();
    let history = note_history(&recent, recent.len(), w);
    let logits = forward(params, &window, &history)?;
    Ok(Some(select_note(&logits, &state.sampling, &mut state.rng)))
}

/// Generates notes for a whole dance, feeding each prediction back as history.
pub fn online_generate(params: &ModelParams, d: &DanceSequence, sampling: Sampling) -> Result<Vec<u8>> {
    sampling.validate()?;
    let cfg = &params.config;
    let k = cfg.k();
    let len = d.len() / k;
    if len == 0 {
        return Err(invalid(format!("dance has {} frames, needs at least k = {k}", d.len())));
    }
    let matrix = dance_sim_matrix(d, Some(0..len * k))?;
    let mut rng = sampling.rng();
    let mut notes = vec![FIRST_NOTE];
    for t in 1..len {
        let window = dance_window::<f32>(&matrix, t, cfg)?;
        let history = note_history(&notes, t, cfg.window_notes);
        let logits = forward(params, &window, &history)?;
        notes.push(select_note(&logits, &sampling, &mut rng));
    }
    Ok(notes)
}

//! The online model: a small CNN over the recent dance similarity window and
//! an LSTM over the recent notes, trained to imitate the offline beam search.

mod dataset;
mod gradcheck;
mod infer;
mod model;
mod params;
mod scalar;
mod train;

pub use dataset::{build_examples, dance_window, read_dataset, write_dataset, TrainingExample};
pub use gradcheck::{gradient_check, TensorCheck};
pub use infer::{online_generate, predict_next, select_note, OnlineGenerator, Sampling};
pub use model::{forward, loss_and_grad, Forward, ShapeTrace};
pub use params::{load_params, ModelParams, Params, Tensor};
pub use scalar::Scalar;
pub use train::{accuracy, train, EpochLog, TrainLog};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::music::NUM_NOTES;

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_frames: usize,
    pub window_notes: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    /// 1-based indices of the conv layers followed by 2×2 max pooling.
    pub pool_after: Vec<usize>,
    pub rnn_hidden: usize,
    pub fc_sizes: Vec<usize>,
    pub classes: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// The full-size architecture.
    pub fn paper() -> Self {
        ModelConfig {
            window_frames: 60,
            window_notes: 10,
            conv_filters: vec![64, 128, 128, 256, 512, 32],
            kernel: 3,
            pool_after: vec![1, 3],
            rnn_hidden: 32,
            fc_sizes: vec![512, 256, 128],
            classes: NUM_NOTES,
            lr: 2e-4,
            epochs: 200,
            batch: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }

    /// A CPU-friendly configuration with the same structure.
    pub fn desk() -> Self {
        ModelConfig {
            conv_filters: vec![16, 32, 32, 32],
            fc_sizes: vec![64, 32],
            epochs: 4,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(invalid(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    /// Frames per note implied by the window sizes.
    pub fn k(&self) -> usize {
        self.window_frames / self.window_notes.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_notes == 0 || self.window_frames == 0 {
            return Err(invalid("window sizes must be positive"));
        }
        if !self.window_frames.is_multiple_of(self.window_notes) {
            return Err(invalid("window_frames must be a multiple of window_notes"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(invalid("kernel size must be odd"));
        }
        if self.classes != NUM_NOTES {
            return Err(invalid(format!("classes must be {NUM_NOTES}")));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(invalid("conv filters must be non-empty and positive"));
        }
        if self.fc_sizes.contains(&0) || self.rnn_hidden == 0 {
            return Err(invalid("layer sizes must be positive"));
        }
        if self
            .pool_after
            .iter()
            .any(|&p| p == 0 || p > self.conv_filters.len())
        {
            return Err(invalid("pool_after refers to a missing conv layer"));
        }
        let mut side = self.window_frames;
        for l in 1..=self.conv_filters.len() {
            if self.pool_after.contains(&l) {
                side /= 2;
            }
        }
        if side == 0 {
            return Err(invalid("window too small for the pooling layers"));
        }
        if self.batch == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }

    /// True when both configs describe the same network shape.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        self.architecture_words() == other.architecture_words()
    }

    pub(crate) fn architecture_words(&self) -> Vec<u32> {
        let mut w = vec![
            self.window_frames as u32,
            self.window_notes as u32,
            self.kernel as u32,
            self.rnn_hidden as u32,
            self.classes as u32,
            self.conv_filters.len() as u32,
        ];
        w.extend(self.conv_filters.iter().map(|&v| v as u32));
        w.push(self.pool_after.len() as u32);
        w.extend(self.pool_after.iter().map(|&v| v as u32));
        w.push(self.fc_sizes.len() as u32);
        w.extend(self.fc_sizes.iter().map(|&v| v as u32));
        w
    }

    pub(crate) fn from_architecture_words(words: &[u32]) -> Option<Self> {
        let mut it = words.iter().map(|&v| v as usize);
        let mut cfg = ModelConfig::desk();
        cfg.window_frames = it.next()?;
        cfg.window_notes = it.next()?;
        cfg.kernel = it.next()?;
        cfg.rnn_hidden = it.next()?;
        cfg.classes = it.next()?;
        let n = it.next()?;
        cfg.conv_filters = (0..n).map(|_| it.next()).collect::<Option<_>>()?;
        let n = it.next()?;
        cfg.pool_after = (0..n).map(|_| it.next()).collect::<Option<_>>()?;
        let n = it.next()?;
        cfg.fc_sizes = (0..n).map(|_| it.next()).collect::<Option<_>>()?;
        if it.next().is_some() {
            return None;
        }
        Some(cfg)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::infer::argmax;
use super::model::{accumulate_loss_and_grad, forward};
use super::{ModelConfig, ModelParams, Params, TrainingExample};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_acc\n");
        for e in &self.epochs {
            let acc = e.val_acc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", e.epoch, e.loss, acc);
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

struct Adam {
    m: Params<f32>,
    v: Params<f32>,
    step: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, cfg: &ModelConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1 as f32, cfg.adam_beta2 as f32);
        let (lr, eps) = (cfg.lr as f32, cfg.adam_eps as f32);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((p, &g), m), v) in p
                .data
                .iter_mut()
                .zip(&g.data)
                .zip(&mut m.data)
                .zip(&mut v.data)
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Fraction of examples whose argmax prediction equals the target.
pub fn accuracy(params: &ModelParams, examples: &[TrainingExample<f32>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(invalid("no examples to score"));
    }
    let mut hits = 0usize;
    for ex in examples {
        let logits = forward(params, &ex.dance_window, &ex.note_history)?;
        if argmax(&logits) == ex.target {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Trains from a seeded initialization with mini-batch Adam.
///
/// `on_epoch` sees each epoch's log entry as it completes.
pub fn train(
    train_set: &[TrainingExample<f32>],
    val_set: &[TrainingExample<f32>],
    cfg: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("training corpus is empty"));
    }
    let mut params = ModelParams::init(cfg, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<&TrainingExample<f32>> = chunk.iter().map(|&i| &train_set[i]).collect();
            grads.fill_zero();
            let loss = accumulate_loss_and_grad(&params, &batch, &mut grads).map_err(|e| {
                Error::Numeric(format!("training diverged at epoch {epoch}, batch {b}: {e}"))
            })?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {b}: loss {loss}"
                )));
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            adam.update(&mut params, &grads, cfg);
        }
        let val_acc = if val_set.is_empty() {
            None
        } else {
            Some(accuracy(&params, val_set)?)
        };
        let entry = EpochLog {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            val_acc,
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    params.config = cfg.clone();
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            window_frames: 12,
            window_notes: 4,
            conv_filters: vec![4, 8],
            pool_after: vec![1, 2],
            rnn_hidden: 8,
            fc_sizes: vec![16],
            lr: 3e-3,
            epochs: 50,
            batch: 8,
            ..ModelConfig::desk()
        }
    }

    /// Target is the most recent note, so the task is learnable from history.
    fn corpus(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<TrainingExample<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = cfg.window_frames;
                let notes: Vec<Option<u8>> =
                    (0..cfg.window_notes).map(|_| Some(rng.gen_range(0..5))).collect();
                TrainingExample {
                    dance_window: (0..s * s).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    target: notes.last().copied().flatten().unwrap(),
                    note_history: notes,
                }
            })
            .collect()
    }

    #[test]
    fn loss_drops_below_uniform() {
        let cfg = small_cfg();
        let data = corpus(&cfg, 50, 1);
        let (_, log) = train(&data, &[], &cfg, |_| {}).unwrap();
        assert!(log.final_loss().unwrap() < 5f64.ln());
        assert_eq!(log.epochs.len(), 50);
    }

    #[test]
    fn desk_preset_fits_a_tiny_corpus() {
        let cfg = ModelConfig { epochs: 50, ..ModelConfig::desk() };
        let data = corpus(&cfg, 50, 2);
        let (_, log) = train(&data, &[], &cfg, |_| {}).unwrap();
        assert!(log.final_loss().unwrap() < 5f64.ln());
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let cfg = ModelConfig { epochs: 3, ..small_cfg() };
        let data = corpus(&cfg, 30, 2);
        let (a, la) = train(&data, &data[..5], &cfg, |_| {}).unwrap();
        let (b, lb) = train(&data, &data[..5], &cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.to_csv().starts_with("epoch,loss,val_acc\n1,"));
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let cfg = ModelConfig { epochs: 3, lr: 0.0, ..small_cfg() };
        let data = corpus(&cfg, 20, 3);
        let (p, _) = train(&data, &[], &cfg, |_| {}).unwrap();
        assert_eq!(p.tensors, ModelParams::init(&cfg, cfg.seed).unwrap().tensors);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ModelConfig { epochs: 2, lr: 1e30, ..small_cfg() };
        let data = corpus(&cfg, 20, 4);
        let err = train(&data, &[], &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(train(&[], &[], &small_cfg(), |_| {}).is_err());
    }
}

//! Threshold baseline: hold the current note while the pose stays similar
//! across a note interval, otherwise jump to a random note.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::music::{check_ordinal, FIRST_NOTE, NUM_NOTES};
use crate::pose::DanceSequence;
use crate::simcorr::cosine_unchecked;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k: usize,
    pub percentile: f64,
    pub seed: u64,
    pub first_note: u8,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            k: 6,
            percentile: 80.0,
            seed: 0,
            first_note: FIRST_NOTE,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(invalid(format!(
                "percentile must be in (0, 100), got {}",
                self.percentile
            )));
        }
        check_ordinal(self.first_note)?;
        Ok(())
    }
}

/// Similarity between the poses at consecutive note onsets.
///
/// Entry `i − 1` compares frames `i·k` and `(i − 1)·k`, for `i` in `1..N/k`.
pub fn interval_sims(d: &DanceSequence, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if d.len() < 2 * k {
        return Err(invalid(format!(
            "dance has {} frames, needs at least 2k = {}",
            d.len(),
            2 * k
        )));
    }
    let len = d.len() / k;
    Ok((1..len)
        .map(|i| cosine_unchecked(d.frames[i * k].as_ref(), d.frames[(i - 1) * k].as_ref()))
        .collect())
}

/// Percentile `p` (0–100) with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("cannot take a percentile of an empty pool"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Threshold at `cfg.percentile` over the pooled interval similarities of `corpus`.
///
/// Dances shorter than two intervals contribute nothing.
pub fn fit_threshold(corpus: &[DanceSequence], cfg: &BaselineConfig) -> Result<f64> {
    cfg.validate()?;
    let mut pool = Vec::new();
    for d in corpus.iter().filter(|d| d.len() >= 2 * cfg.k) {
        pool.extend(interval_sims(d, cfg.k)?);
    }
    percentile(&pool, cfg.percentile)
}

/// Note sequence of length `floor(N / k)`.
pub fn baseline_generate(d: &DanceSequence, threshold: f64, cfg: &BaselineConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    let len = d.len() / cfg.k;
    if len == 0 {
        return Err(invalid(format!(
            "dance has {} frames, needs at least k = {}",
            d.len(),
            cfg.k
        )));
    }
    let sims = if len > 1 { interval_sims(d, cfg.k)? } else { Vec::new() };
    Ok(notes_from_sims(&sims, threshold, cfg))
}

pub(crate) fn notes_from_sims(sims: &[f64], threshold: f64, cfg: &BaselineConfig) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut notes = Vec::with_capacity(sims.len() + 1);
    notes.push(cfg.first_note);
    for &s in sims {
        let prev = *notes.last().expect("non-empty");
        notes.push(if s < threshold {
            rng.gen_range(0..NUM_NOTES as u8)
        } else {
            prev
        });
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{synth_dance, PoseFrame, SynthConfig, POSE_DIM};
    use proptest::prelude::*;

    fn basis(i: usize) -> PoseFrame {
        let mut c = [0.0; POSE_DIM];
        c[i] = 1.0;
        PoseFrame::new(c).unwrap()
    }

    fn dance(frames: Vec<PoseFrame>) -> DanceSequence {
        DanceSequence::new(frames, 30, "t").unwrap()
    }

    #[test]
    fn interval_similarity_cases() {
        let c = dance(vec![basis(1); 40]);
        let s = interval_sims(&c, 6).unwrap();
        assert_eq!(s.len(), 40 / 6 - 1);
        assert!(s.iter().all(|&v| v == 1.0));

        let alt: Vec<_> = (0..36).map(|f| basis((f / 6) % 2)).collect();
        assert!(interval_sims(&dance(alt), 6).unwrap().iter().all(|&v| v == 0.0));

        assert!(interval_sims(&dance(vec![basis(0); 11]), 6).is_err());
    }

    #[test]
    fn percentile_cases() {
        assert_eq!(percentile(&[0.0, 1.0], 50.0).unwrap(), 0.5);
        assert_eq!(percentile(&[0.3; 7], 80.0).unwrap(), 0.3);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0, 5.0], 75.0).unwrap(), 4.0);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn fit_threshold_above_median() {
        let corpus: Vec<_> = (0..10)
            .map(|seed| synth_dance(&SynthConfig { seed, ..Default::default() }).unwrap())
            .collect();
        let cfg = BaselineConfig::default();
        let t = fit_threshold(&corpus, &cfg).unwrap();
        let pool: Vec<f64> = corpus.iter().flat_map(|d| interval_sims(d, 6).unwrap()).collect();
        assert!(t >= percentile(&pool, 50.0).unwrap());
        assert!(fit_threshold(&[], &cfg).is_err());
        assert!(fit_threshold(&corpus, &BaselineConfig { percentile: 100.0, ..cfg }).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let d = synth_dance(&SynthConfig { seed: 2, ..Default::default() }).unwrap();
        let cfg = BaselineConfig { seed: 9, ..Default::default() };
        let notes = baseline_generate(&d, -2.0, &cfg).unwrap();
        assert_eq!(notes, vec![2; 60]);
        let a = baseline_generate(&d, 2.0, &cfg).unwrap();
        assert_eq!(a, baseline_generate(&d, 2.0, &cfg).unwrap());
        assert!(a.windows(2).any(|w| w[0] != w[1]));
        assert_eq!(baseline_generate(&d.truncated(6), 0.5, &cfg).unwrap(), vec![2]);
    }

    #[test]
    fn changes_only_below_threshold() {
        let cfg = BaselineConfig { seed: 4, ..Default::default() };
        for seed in 0..50 {
            let notes = notes_from_sims(&[0.95, 0.85, 0.99], 0.9, &BaselineConfig { seed, ..cfg.clone() });
            assert_eq!(notes[1], notes[0]);
            assert_eq!(notes[3], notes[2]);
        }
    }

    proptest! {
        #[test]
        fn note_changes_respect_threshold(
            sims in prop::collection::vec(-1.0f64..1.0, 1..200),
            threshold in -1.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let cfg = BaselineConfig { seed, ..Default::default() };
            let notes = notes_from_sims(&sims, threshold, &cfg);
            prop_assert_eq!(notes.len(), sims.len() + 1);
            for (i, s) in sims.iter().enumerate() {
                if notes[i + 1] != notes[i] {
                    prop_assert!(*s < threshold);
                }
            }
        }
    }
}

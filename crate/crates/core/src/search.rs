//! Offline generator: beam search over note sequences, scoring each candidate
//! by the correlation between its recent notes and the matching dance frames.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::music::{check_ordinal, FIRST_NOTE, NUM_NOTES};
use crate::pose::DanceSequence;
use crate::simcorr::{
    dance_music_corr, dance_sim_matrix, global_correlation, note_similarity, SimMatrix,
    ZERO_VARIANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Equal scores are ordered by the lexicographically smaller note sequence.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Dance frames per note.
    pub k: usize,
    pub beam_width: usize,
    /// Notes of local history used when scoring.
    pub window_notes: usize,
    pub first_note: u8,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 6,
            beam_width: 50,
            window_notes: 10,
            first_note: FIRST_NOTE,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.beam_width == 0 {
            return Err(invalid("beam width must be at least 1"));
        }
        if self.window_notes < 2 {
            return Err(invalid("window must hold at least 2 notes"));
        }
        check_ordinal(self.first_note)?;
        Ok(())
    }

    /// First note index inside the scoring window that ends at note `t`.
    pub fn window_start(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.window_notes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamCandidate {
    pub notes: Vec<u8>,
    /// Score of the most recent window.
    pub score: f64,
}

/// Correlation of the last `window_notes` notes of `notes` with their frames in `d`.
///
/// `d` covers the dance from frame 0; the prefix ends at note `t = notes.len() − 1`.
pub fn window_score(d: &SimMatrix, notes: &[u8], cfg: &SearchConfig) -> Result<f64> {
    cfg.validate()?;
    if notes.is_empty() {
        return Err(invalid("empty note prefix"));
    }
    let t = notes.len() - 1;
    if (t + 1) * cfg.k > d.size() {
        return Err(invalid(format!(
            "{} notes need {} frames, dance matrix has {}",
            notes.len(),
            notes.len() * cfg.k,
            d.size()
        )));
    }
    let lo = cfg.window_start(t);
    let (f0, f1) = (lo * cfg.k, (t + 1) * cfg.k);
    let sub = SimMatrix::symmetric_from_fn(f1 - f0, |i, j| d.get(f0 + i, f0 + j));
    dance_music_corr(&sub, &notes[lo..], cfg.k)
}

/// Scores many candidate windows against one dance window.
///
/// The dance side of the correlation is identical for every candidate at a
/// given step, so it is centred and summed per note block once; each candidate
/// then costs one pass over its `w × w` note pairs.
pub struct WindowScorer<'a> {
    d: &'a SimMatrix,
    k: usize,
    notes_in_window: usize,
    /// Σ over each k×k block of (D − mean).
    centred_blocks: Vec<f64>,
    dance_ss: f64,
    count: f64,
}

impl<'a> WindowScorer<'a> {
    /// Prepares scoring of notes `lo..=t`.
    pub fn new(d: &'a SimMatrix, k: usize, lo: usize, t: usize) -> Self {
        let w = t + 1 - lo;
        let (f0, f1) = (lo * k, (t + 1) * k);
        let n = f1 - f0;
        let count = (n * n) as f64;
        let mut sum = 0.0;
        for a in f0..f1 {
            sum += d.row(a)[f0..f1].iter().sum::<f64>();
        }
        let mean = sum / count;
        let mut dance_ss = 0.0;
        let mut centred_blocks = vec![0.0; w * w];
        for a in f0..f1 {
            let bi = (a - f0) / k;
            let row = &d.row(a)[f0..f1];
            for (bj, chunk) in row.chunks_exact(k).enumerate() {
                let mut s = 0.0;
                for v in chunk {
                    let c = v - mean;
                    s += c;
                    dance_ss += c * c;
                }
                centred_blocks[bi * w + bj] += s;
            }
        }
        WindowScorer {
            d,
            k,
            notes_in_window: w,
            centred_blocks,
            dance_ss,
            count,
        }
    }

    pub fn matrix(&self) -> &SimMatrix {
        self.d
    }

    /// Correlation for a window of exactly `notes_in_window` notes.
    pub fn score(&self, window: &[u8]) -> f64 {
        let w = self.notes_in_window;
        debug_assert_eq!(window.len(), w);
        if self.dance_ss / self.count < ZERO_VARIANCE {
            return 0.0;
        }
        let mut sim_sum = 0.0;
        for &a in window {
            for &b in window {
                sim_sum += note_similarity(a, b);
            }
        }
        let mean = sim_sum / (w * w) as f64;
        let block = (self.k * self.k) as f64;
        let (mut cov, mut music_ss) = (0.0, 0.0);
        for (i, &a) in window.iter().enumerate() {
            let blocks = &self.centred_blocks[i * w..(i + 1) * w];
            for (&b, c) in window.iter().zip(blocks) {
                let y = note_similarity(a, b) - mean;
                cov += y * c;
                music_ss += y * y;
            }
        }
        music_ss *= block;
        if music_ss / self.count < ZERO_VARIANCE {
            return 0.0;
        }
        (cov / (self.dance_ss.sqrt() * music_ss.sqrt())).clamp(-1.0, 1.0)
    }
}

fn rank(cands: &mut [BeamCandidate]) {
    cands.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.notes.cmp(&b.notes)));
}

fn prepare(d: &DanceSequence, cfg: &SearchConfig) -> Result<(usize, SimMatrix)> {
    cfg.validate()?;
    let len = d.len() / cfg.k;
    if len == 0 {
        return Err(invalid(format!(
            "dance has {} frames, needs at least k = {}",
            d.len(),
            cfg.k
        )));
    }
    Ok((len, dance_sim_matrix(d, Some(0..len * cfg.k))?))
}

/// Beam search returning the best final candidate.
pub fn beam_search(d: &DanceSequence, cfg: &SearchConfig) -> Result<BeamCandidate> {
    let (len, matrix) = prepare(d, cfg)?;
    beam_search_matrix(&matrix, len, cfg)
}

pub(crate) fn beam_search_matrix(
    matrix: &SimMatrix,
    len: usize,
    cfg: &SearchConfig,
) -> Result<BeamCandidate> {
    let mut beam = vec![BeamCandidate {
        notes: vec![cfg.first_note],
        score: 0.0,
    }];
    for t in 1..len {
        let lo = cfg.window_start(t);
        let scorer = WindowScorer::new(matrix, cfg.k, lo, t);
        let mut children = Vec::with_capacity(beam.len() * NUM_NOTES);
        for cand in &beam {
            for note in 0..NUM_NOTES as u8 {
                let mut notes = Vec::with_capacity(len);
                notes.extend_from_slice(&cand.notes);
                notes.push(note);
                let score = scorer.score(&notes[lo..]);
                children.push(BeamCandidate { notes, score });
            }
        }
        rank(&mut children);
        children.truncate(cfg.beam_width);
        beam = children;
    }
    Ok(beam.swap_remove(0))
}

/// Offline generation: `floor(N / k)` notes starting with `cfg.first_note`.
pub fn beam_generate(d: &DanceSequence, cfg: &SearchConfig) -> Result<Vec<u8>> {
    Ok(beam_search(d, cfg)?.notes)
}

/// Longest sequence [`exhaustive_generate`] will enumerate.
pub const EXHAUSTIVE_MAX_NOTES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    /// Best sequence under the beam's criterion (final-window score).
    pub windowed: BeamCandidate,
    /// Best sequence under the global correlation.
    pub global: BeamCandidate,
}

/// Brute-force reference: enumerates every sequence with the fixed first note.
pub fn exhaustive_generate(d: &DanceSequence, cfg: &SearchConfig) -> Result<ExhaustiveResult> {
    let (len, matrix) = prepare(d, cfg)?;
    if len > EXHAUSTIVE_MAX_NOTES {
        return Err(invalid(format!(
            "{len} notes is too many to enumerate (max {EXHAUSTIVE_MAX_NOTES})"
        )));
    }
    let t = len - 1;
    let lo = cfg.window_start(t);
    let scorer = WindowScorer::new(&matrix, cfg.k, lo, t);

    let mut notes = vec![0u8; len];
    notes[0] = cfg.first_note;
    let mut windowed: Option<BeamCandidate> = None;
    let mut global: Option<BeamCandidate> = None;
    let total = NUM_NOTES.pow(t as u32);
    for code in 0..total {
        // Most significant digit first, so codes enumerate in lexicographic order.
        let mut c = code;
        for slot in notes[1..].iter_mut().rev() {
            *slot = (c % NUM_NOTES) as u8;
            c /= NUM_NOTES;
        }
        let w = if len == 1 { 0.0 } else { scorer.score(&notes[lo..]) };
        if windowed.as_ref().is_none_or(|b| w > b.score) {
            windowed = Some(BeamCandidate { notes: notes.clone(), score: w });
        }
        let g = dance_music_corr(&matrix, &notes, cfg.k)?;
        if global.as_ref().is_none_or(|b| g > b.score) {
            global = Some(BeamCandidate { notes: notes.clone(), score: g });
        }
    }
    Ok(ExhaustiveResult {
        windowed: windowed.expect("at least one sequence"),
        global: global.expect("at least one sequence"),
    })
}

/// Global correlation of a generated sequence with its dance.
pub fn sequence_correlation(d: &DanceSequence, notes: &[u8], k: usize) -> Result<f64> {
    global_correlation(d, notes, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{random_pose, synth_dance, PoseFrame, SynthConfig, POSE_DIM};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn basis(i: usize) -> PoseFrame {
        let mut c = [0.0; POSE_DIM];
        c[i] = 1.0;
        PoseFrame::new(c).unwrap()
    }

    fn blocks(per_block: &[(usize, usize)]) -> DanceSequence {
        let frames = per_block
            .iter()
            .flat_map(|&(axis, n)| std::iter::repeat_n(basis(axis), n))
            .collect();
        DanceSequence::new(frames, 30, "blocks").unwrap()
    }

    fn cfg(k: usize) -> SearchConfig {
        SearchConfig { k, ..Default::default() }
    }

    #[test]
    fn short_prefix_window_covers_everything() {
        let d = synth_dance(&SynthConfig { seed: 3, ..Default::default() }).unwrap();
        let m = dance_sim_matrix(&d, None).unwrap();
        let notes = [2u8, 0, 4, 4, 1, 3];
        let s = window_score(&m, &notes, &cfg(6)).unwrap();
        let sub = dance_sim_matrix(&d, Some(0..36)).unwrap();
        assert_eq!(s, dance_music_corr(&sub, &notes, 6).unwrap());
    }

    #[test]
    fn window_score_rejects_long_prefix() {
        let d = blocks(&[(0, 12)]);
        let m = dance_sim_matrix(&d, None).unwrap();
        assert!(window_score(&m, &[2, 2, 2], &cfg(6)).is_err());
    }

    #[test]
    fn constant_dance_scores_zero() {
        let d = blocks(&[(4, 120)]);
        let m = dance_sim_matrix(&d, None).unwrap();
        for len in 1..=20 {
            let notes: Vec<u8> = (0..len).map(|i| (i * 7 % 5) as u8).collect();
            assert_eq!(window_score(&m, &notes, &cfg(6)).unwrap(), 0.0);
        }
    }

    #[test]
    fn aligned_two_block_scores_one() {
        let d = blocks(&[(0, 18), (1, 18)]);
        let m = dance_sim_matrix(&d, None).unwrap();
        let s = window_score(&m, &[2, 2, 2, 0, 0, 0], &cfg(6)).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fast_scorer_matches_direct_correlation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let d = synth_dance(&SynthConfig {
                seed: case,
                duration_s: 4.0,
                noise_std: 0.1,
                ..Default::default()
            })
            .unwrap();
            let c = SearchConfig { k: 3 + (case as usize % 4), window_notes: 2 + case as usize % 9, ..Default::default() };
            let len = d.len() / c.k;
            let m = dance_sim_matrix(&d, Some(0..len * c.k)).unwrap();
            let notes: Vec<u8> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, 0..5)).collect();
            for t in 0..len {
                let lo = c.window_start(t);
                let fast = WindowScorer::new(&m, c.k, lo, t).score(&notes[lo..=t]);
                let direct = window_score(&m, &notes[..=t], &c).unwrap();
                assert!((fast - direct).abs() < 1e-12, "t={t}: {fast} vs {direct}");
            }
        }
    }

    #[test]
    fn constant_dance_tie_break_output() {
        let d = blocks(&[(2, 60)]);
        assert_eq!(beam_generate(&d, &cfg(6)).unwrap(), vec![2, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn output_length_and_first_note() {
        let d = synth_dance(&SynthConfig { seed: 1, duration_s: 3.1, ..Default::default() }).unwrap();
        let notes = beam_generate(&d, &cfg(6)).unwrap();
        assert_eq!(notes.len(), 93 / 6);
        assert_eq!(notes[0], 2);
        assert!(notes.iter().all(|&n| n < 5));
        assert!(beam_generate(&d.truncated(5), &cfg(6)).is_err());
    }

    #[test]
    fn two_block_dance_produces_two_levels() {
        let d = blocks(&[(0, 12), (1, 30)]);
        let notes = beam_generate(&d, &cfg(6)).unwrap();
        assert_eq!(notes, vec![2, 2, 0, 0, 0, 0, 0]);
        assert!((global_correlation(&d, &notes, 6).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn long_constant_first_block_is_not_recovered() {
        // every window inside a constant block scores 0, so the tie-break settles on 0 after the fixed E4
        let d = blocks(&[(0, 30), (1, 30)]);
        let notes = beam_generate(&d, &cfg(6)).unwrap();
        assert_eq!(notes, vec![2, 0, 1, 1, 1, 4, 4, 4, 4, 4]);
        assert!(notes[5..].iter().all(|&n| n == 4));
    }

    #[test]
    fn greedy_can_outscore_a_wider_beam() {
        let d = synth_dance(&SynthConfig { seed: 5, duration_s: 4.0, ..Default::default() }).unwrap();
        let wide = beam_search(&d, &cfg(6)).unwrap();
        let greedy = beam_search(&d, &SearchConfig { beam_width: 1, ..cfg(6) }).unwrap();
        assert!(greedy.score > wide.score);
    }

    #[test]
    fn exhaustive_small_cases() {
        let d = blocks(&[(0, 6)]);
        let r = exhaustive_generate(&d, &cfg(6)).unwrap();
        assert_eq!(r.windowed.notes, vec![2]);

        let d = blocks(&[(0, 6), (1, 6)]);
        let r = exhaustive_generate(&d, &cfg(6)).unwrap();
        assert_eq!(r.windowed.notes, vec![2, 0]);
        assert_eq!(r.global.notes, vec![2, 0]);

        let long = blocks(&[(0, 6 * 9)]);
        assert!(exhaustive_generate(&long, &cfg(6)).is_err());
    }

    #[test]
    fn exhaustive_brute_force_agrees_with_direct_scoring() {
        let d = synth_dance(&SynthConfig { seed: 5, duration_s: 0.8, noise_std: 0.2, ..Default::default() }).unwrap();
        let c = cfg(6);
        let r = exhaustive_generate(&d, &c).unwrap();
        let len = d.len() / c.k;
        let m = dance_sim_matrix(&d, Some(0..len * c.k)).unwrap();
        let direct = window_score(&m, &r.windowed.notes, &c).unwrap();
        assert!((direct - r.windowed.score).abs() < 1e-12);
    }

    #[test]
    fn global_window_is_flatter_on_a_long_structured_dance() {
        let d = synth_dance(&SynthConfig { seed: 21, duration_s: 24.0, motif_len: 8, ..Default::default() }).unwrap();
        let local = beam_generate(&d, &cfg(6)).unwrap();
        let global = beam_generate(&d, &SearchConfig { window_notes: local.len(), ..cfg(6) }).unwrap();
        let changes = |n: &[u8]| n.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(changes(&global) < changes(&local), "{} vs {}", changes(&global), changes(&local));
    }

    #[test]
    fn invalid_configs() {
        let d = blocks(&[(0, 60)]);
        for c in [
            SearchConfig { k: 0, ..Default::default() },
            SearchConfig { beam_width: 0, ..Default::default() },
            SearchConfig { window_notes: 1, ..Default::default() },
            SearchConfig { first_note: 5, ..Default::default() },
        ] {
            assert!(beam_generate(&d, &c).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn beam_matches_exhaustive_on_short_dances(seed in any::<u64>(), notes in 1usize..=4, k in 1usize..=6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..notes * k + seed as usize % k).map(|_| random_pose(&mut rng)).collect();
            let d = DanceSequence::new(frames, 30, "p").unwrap();
            let c = SearchConfig { k, ..Default::default() };
            let beam = beam_search(&d, &c).unwrap();
            let ex = exhaustive_generate(&d, &c).unwrap();
            prop_assert_eq!(beam.score, ex.windowed.score);
            prop_assert_eq!(beam.notes, ex.windowed.notes);
        }

        #[test]
        fn optimum_bounds_beam_and_greedy(seed in any::<u64>()) {
            let d = synth_dance(&SynthConfig { seed, duration_s: 1.6, noise_std: 0.1, ..Default::default() }).unwrap();
            let ex = exhaustive_generate(&d, &cfg(6)).unwrap();
            let wide = beam_search(&d, &cfg(6)).unwrap();
            let greedy = beam_search(&d, &SearchConfig { beam_width: 1, ..cfg(6) }).unwrap();
            prop_assert!(ex.windowed.score >= wide.score - 1e-12);
            prop_assert!(ex.windowed.score >= greedy.score - 1e-12);
        }

        #[test]
        fn deterministic(seed in any::<u64>()) {
            let d = synth_dance(&SynthConfig { seed, duration_s: 3.0, ..Default::default() }).unwrap();
            prop_assert_eq!(beam_generate(&d, &cfg(6)).unwrap(), beam_generate(&d, &cfg(6)).unwrap());
        }
    }
}

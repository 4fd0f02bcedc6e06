//! Pose data model, pose-estimator ingestion and the synthetic dance generator.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Error, Result};

/// Number of COCO-18 keypoints produced by the pose estimator.
pub const KEYPOINTS: usize = 18;
/// Length of a flattened pose vector (x, y per keypoint).
pub const POSE_DIM: usize = 2 * KEYPOINTS;
/// Frame rate used when none is given.
pub const DEFAULT_FPS: u32 = 30;

/// A single normalized body pose: x, y for each of the 18 keypoints, in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame([f64; POSE_DIM]);

impl PoseFrame {
    pub const ZERO: PoseFrame = PoseFrame([0.0; POSE_DIM]);

    /// Builds a frame, rejecting non-finite or out-of-range coordinates.
    pub fn new(coords: [f64; POSE_DIM]) -> Result<Self> {
        if let Some(i) = coords.iter().position(|c| !c.is_finite() || c.abs() > 1.0) {
            return Err(invalid(format!(
                "coordinate {i} = {} outside [-1, 1]",
                coords[i]
            )));
        }
        Ok(PoseFrame(coords))
    }

    /// Builds a frame, clamping every coordinate into [-1, 1]. NaN becomes 0.
    pub fn clamped(mut coords: [f64; POSE_DIM]) -> Self {
        for c in coords.iter_mut() {
            *c = if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) };
        }
        PoseFrame(coords)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let coords: [f64; POSE_DIM] = values
            .try_into()
            .map_err(|_| invalid(format!("pose must have {POSE_DIM} values, got {}", values.len())))?;
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64; POSE_DIM] {
        &self.0
    }

    pub fn keypoint(&self, i: usize) -> (f64, f64) {
        (self.0[2 * i], self.0[2 * i + 1])
    }
}

impl AsRef<[f64]> for PoseFrame {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A dance: an ordered sequence of poses sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DanceSequence {
    pub frames: Vec<PoseFrame>,
    pub fps: u32,
    pub source_id: String,
}

impl DanceSequence {
    pub fn new(frames: Vec<PoseFrame>, fps: u32, source_id: impl Into<String>) -> Result<Self> {
        if fps == 0 {
            return Err(invalid("fps must be positive"));
        }
        Ok(DanceSequence {
            frames,
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Copy holding only the first `n` frames.
    pub fn truncated(&self, n: usize) -> DanceSequence {
        DanceSequence {
            frames: self.frames[..n.min(self.frames.len())].to_vec(),
            fps: self.fps,
            source_id: self.source_id.clone(),
        }
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        let file = CanonicalFile {
            fps: self.fps,
            source_id: self.source_id.clone(),
            frames: self.frames.iter().map(|f| f.0.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_canonical_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CanonicalFile {
    fps: u32,
    source_id: String,
    frames: Vec<Vec<f64>>,
}

/// One raw estimator keypoint in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// Maps pixel keypoints into [-1, 1] with `2·p/size − 1`.
///
/// Undetected keypoints (confidence 0) take their value from `prev`, or the
/// origin when there is no previous frame.
pub fn normalize_keypoints(
    raw: &[Keypoint; KEYPOINTS],
    image_w: f64,
    image_h: f64,
    prev: Option<&PoseFrame>,
) -> Result<PoseFrame> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(invalid(format!(
            "image dimensions must be positive, got {image_w}x{image_h}"
        )));
    }
    let mut coords = [0.0; POSE_DIM];
    for (i, kp) in raw.iter().enumerate() {
        let (x, y) = if kp.confidence > 0.0 {
            (2.0 * kp.x / image_w - 1.0, 2.0 * kp.y / image_h - 1.0)
        } else {
            prev.map(|p| p.keypoint(i)).unwrap_or((0.0, 0.0))
        };
        coords[2 * i] = x;
        coords[2 * i + 1] = y;
    }
    Ok(PoseFrame::clamped(coords))
}

/// Image size needed to normalize raw estimator output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

/// Parses either a canonical pose file or an array of estimator records.
pub fn load_pose_json_bytes(bytes: &[u8], image: Option<ImageSize>) -> Result<DanceSequence> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        index: 0,
        message: e.to_string(),
    })?;
    match value {
        Value::Object(ref map) if map.contains_key("frames") => parse_canonical(value),
        Value::Array(records) => {
            let image = image.ok_or_else(|| {
                invalid("estimator records need the image width and height")
            })?;
            parse_estimator_records(records.iter(), image, DEFAULT_FPS, "estimator")
        }
        Value::Object(_) => {
            // A single estimator record.
            let image = image.ok_or_else(|| {
                invalid("estimator records need the image width and height")
            })?;
            parse_estimator_records(std::iter::once(&value), image, DEFAULT_FPS, "estimator")
        }
        _ => Err(Error::Parse {
            index: 0,
            message: "expected a canonical pose object or an array of records".into(),
        }),
    }
}

/// Loads a canonical file, an estimator array file, or a directory of
/// per-frame estimator files (read in lexicographic order).
pub fn load_pose_json(path: impl AsRef<Path>, image: Option<ImageSize>) -> Result<DanceSequence> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let image =
            image.ok_or_else(|| invalid("estimator records need the image width and height"))?;
        let mut records = Vec::with_capacity(files.len());
        for (index, file) in files.iter().enumerate() {
            let bytes = fs::read(file)?;
            let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                index,
                message: e.to_string(),
            })?;
            records.push(v);
        }
        let id = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return parse_estimator_records(records.iter(), image, DEFAULT_FPS, &id);
    }
    load_pose_json_bytes(&fs::read(path)?, image)
}

fn parse_canonical(value: Value) -> Result<DanceSequence> {
    let file: CanonicalFile = serde_json::from_value(value).map_err(|e| Error::Parse {
        index: 0,
        message: e.to_string(),
    })?;
    if file.fps == 0 {
        return Err(invalid("fps must be positive"));
    }
    if file.frames.is_empty() {
        return Err(invalid("pose file has no frames"));
    }
    let frames = file
        .frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            PoseFrame::from_slice(f).map_err(|e| Error::Parse {
                index,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DanceSequence::new(frames, file.fps, file.source_id)
}

fn parse_estimator_records<'a>(
    records: impl Iterator<Item = &'a Value>,
    image: ImageSize,
    fps: u32,
    source_id: &str,
) -> Result<DanceSequence> {
    let mut frames: Vec<PoseFrame> = Vec::new();
    for (index, record) in records.enumerate() {
        let parse_err = |message: &str| Error::Parse {
            index,
            message: message.to_string(),
        };
        let people = record
            .get("people")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err("missing `people` array"))?;
        let prev = frames.last().copied();
        let Some(person) = people.first() else {
            frames.push(prev.unwrap_or(PoseFrame::ZERO));
            continue;
        };
        let values = person
            .get("pose_keypoints_2d")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err("missing `pose_keypoints_2d`"))?;
        if values.len() != 3 * KEYPOINTS {
            return Err(parse_err(&format!(
                "`pose_keypoints_2d` must hold {} numbers, got {}",
                3 * KEYPOINTS,
                values.len()
            )));
        }
        let mut raw = [Keypoint { x: 0.0, y: 0.0, confidence: 0.0 }; KEYPOINTS];
        for (i, kp) in raw.iter_mut().enumerate() {
            let num = |j: usize| {
                values[3 * i + j]
                    .as_f64()
                    .ok_or_else(|| parse_err("non-numeric keypoint value"))
            };
            *kp = Keypoint {
                x: num(0)?,
                y: num(1)?,
                confidence: num(2)?,
            };
        }
        frames.push(normalize_keypoints(&raw, image.width, image.height, prev.as_ref())?);
    }
    if frames.is_empty() {
        return Err(invalid("no estimator records"));
    }
    DanceSequence::new(frames, fps, source_id)
}

/// Parameters of the synthetic dance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub fps: u32,
    pub n_base_poses: usize,
    /// Number of held-pose segments.
    pub motif_len: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Explicit segment-to-base-pose assignment; generated from the seed when absent.
    #[serde(default)]
    pub motif: Option<Vec<usize>>,
    /// Fraction of each segment spent easing in from the previous pose.
    pub ease_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_s: 12.0,
            fps: DEFAULT_FPS,
            n_base_poses: 4,
            motif_len: 6,
            noise_std: 0.03,
            seed: 0,
            motif: None,
            ease_frac: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be positive"));
        }
        if self.fps == 0 {
            return Err(invalid("fps must be positive"));
        }
        if self.n_base_poses < 2 {
            return Err(invalid("n_base_poses must be at least 2"));
        }
        if self.motif_len == 0 {
            return Err(invalid("motif_len must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.ease_frac) {
            return Err(invalid("ease_frac must be in [0, 1]"));
        }
        if let Some(m) = &self.motif {
            if m.len() != self.motif_len {
                return Err(invalid("motif length must equal motif_len"));
            }
            if m.iter().any(|&p| p >= self.n_base_poses) {
                return Err(invalid("motif refers to a missing base pose"));
            }
        }
        if self.frame_count() == 0 {
            return Err(invalid("duration too short for a single frame"));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps as f64).round() as usize
    }
}

/// Generates a deterministic dance built from repeated held poses.
pub fn synth_dance(cfg: &SynthConfig) -> Result<DanceSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let bases: Vec<[f64; POSE_DIM]> = (0..cfg.n_base_poses)
        .map(|_| {
            let mut v = [0.0; POSE_DIM];
            v.iter_mut().for_each(|c| *c = unit.sample(&mut rng));
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|c| *c = (*c / norm).clamp(-1.0, 1.0));
            v
        })
        .collect();

    let motif = match &cfg.motif {
        Some(m) => m.clone(),
        None => {
            let mut m = Vec::with_capacity(cfg.motif_len);
            m.push(0);
            let all: Vec<usize> = (0..cfg.n_base_poses).collect();
            for i in 1..cfg.motif_len {
                let prev = m[i - 1];
                let choices: Vec<usize> = all.iter().copied().filter(|&p| p != prev).collect();
                m.push(*choices.choose(&mut rng).expect("at least two base poses"));
            }
            m
        }
    };

    let n = cfg.frame_count();
    let segs = cfg.motif_len;
    let seg_start = |s: usize| (s * n).div_ceil(segs);
    let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("noise std"));

    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let seg = f * segs / n;
        let cur = &bases[motif[seg]];
        let mut coords = *cur;
        if seg > 0 && motif[seg] != motif[seg - 1] {
            let start = seg_start(seg);
            let len = seg_start(seg + 1) - start;
            let ease = (cfg.ease_frac * len as f64).round() as usize;
            let pos = f - start;
            if pos < ease {
                let u = (pos + 1) as f64 / (ease + 1) as f64;
                let w = 0.5 * (1.0 - (PI * u).cos());
                let prev = &bases[motif[seg - 1]];
                for (c, (p, q)) in coords.iter_mut().zip(prev.iter().zip(cur.iter())) {
                    *c = (1.0 - w) * p + w * q;
                }
            }
        }
        if let Some(noise) = &noise {
            coords.iter_mut().for_each(|c| *c += noise.sample(&mut rng));
        }
        frames.push(PoseFrame::clamped(coords));
    }
    DanceSequence::new(frames, cfg.fps, format!("synth-{}", cfg.seed))
}

/// Uniform random pose, handy for tests and fuzzing.
pub fn random_pose(rng: &mut impl Rng) -> PoseFrame {
    let mut coords = [0.0; POSE_DIM];
    coords.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..=1.0));
    PoseFrame(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcorr::dance_sim_matrix;
    use proptest::prelude::*;

    fn uniform_raw(x: f64, y: f64, conf: f64) -> [Keypoint; KEYPOINTS] {
        [Keypoint { x, y, confidence: conf }; KEYPOINTS]
    }

    #[test]
    fn center_maps_to_origin() {
        let p = normalize_keypoints(&uniform_raw(320.0, 240.0, 1.0), 640.0, 480.0, None).unwrap();
        assert!(p.coords().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn corner_maps_to_minus_one() {
        let p = normalize_keypoints(&uniform_raw(0.0, 0.0, 1.0), 640.0, 480.0, None).unwrap();
        assert!(p.coords().iter().all(|&c| c == -1.0));
    }

    #[test]
    fn undetected_keypoints_carry_forward() {
        let mut prev = [0.0; POSE_DIM];
        for i in 0..KEYPOINTS {
            prev[2 * i] = 0.25;
            prev[2 * i + 1] = -0.5;
        }
        let prev = PoseFrame::new(prev).unwrap();
        let p = normalize_keypoints(&uniform_raw(0.0, 0.0, 0.0), 640.0, 480.0, Some(&prev)).unwrap();
        assert_eq!(p.keypoint(3), (0.25, -0.5));
        let p = normalize_keypoints(&uniform_raw(0.0, 0.0, 0.0), 640.0, 480.0, None).unwrap();
        assert_eq!(p, PoseFrame::ZERO);
    }

    #[test]
    fn out_of_image_keypoints_are_clamped() {
        let p = normalize_keypoints(&uniform_raw(2000.0, -50.0, 1.0), 640.0, 480.0, None).unwrap();
        assert_eq!(p.keypoint(0), (1.0, -1.0));
    }

    #[test]
    fn rejects_non_positive_image() {
        let raw = uniform_raw(1.0, 1.0, 1.0);
        assert!(matches!(
            normalize_keypoints(&raw, 0.0, 480.0, None),
            Err(Error::InvalidInput(_))
        ));
        assert!(normalize_keypoints(&raw, 640.0, -1.0, None).is_err());
    }

    fn record(values: Option<Vec<f64>>) -> Value {
        match values {
            Some(v) => serde_json::json!({"people": [{"pose_keypoints_2d": v}]}),
            None => serde_json::json!({"people": []}),
        }
    }

    #[test]
    fn estimator_record_centered_person() {
        let kp: Vec<f64> = (0..KEYPOINTS).flat_map(|_| [500.0, 500.0, 1.0]).collect();
        let bytes = serde_json::to_vec(&vec![record(Some(kp))]).unwrap();
        let image = ImageSize { width: 1000.0, height: 1000.0 };
        let d = load_pose_json_bytes(&bytes, Some(image)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.fps, 30);
        assert_eq!(d.frames[0], PoseFrame::ZERO);
    }

    #[test]
    fn missing_person_reuses_previous_frame() {
        let mut records = Vec::new();
        for f in 0..5 {
            let kp: Vec<f64> = (0..KEYPOINTS)
                .flat_map(|i| [100.0 + f as f64 * 10.0 + i as f64, 200.0, 0.9])
                .collect();
            records.push(record(Some(kp)));
        }
        records.push(record(None));
        let bytes = serde_json::to_vec(&records).unwrap();
        let image = ImageSize { width: 640.0, height: 480.0 };
        let d = load_pose_json_bytes(&bytes, Some(image)).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d.frames[5], d.frames[4]);

        let bytes = serde_json::to_vec(&vec![record(None)]).unwrap();
        let d = load_pose_json_bytes(&bytes, Some(image)).unwrap();
        assert_eq!(d.frames[0], PoseFrame::ZERO);
    }

    #[test]
    fn malformed_record_reports_frame_index() {
        let good: Vec<f64> = (0..KEYPOINTS).flat_map(|_| [1.0, 1.0, 1.0]).collect();
        let records = vec![record(Some(good.clone())), record(Some(good[..10].to_vec()))];
        let bytes = serde_json::to_vec(&records).unwrap();
        let image = ImageSize { width: 10.0, height: 10.0 };
        match load_pose_json_bytes(&bytes, Some(image)) {
            Err(Error::Parse { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let image = Some(ImageSize { width: 10.0, height: 10.0 });
        assert!(matches!(load_pose_json_bytes(b"[]", image), Err(Error::InvalidInput(_))));
        let empty = br#"{"fps":30,"source_id":"x","frames":[]}"#;
        assert!(matches!(load_pose_json_bytes(empty, None), Err(Error::InvalidInput(_))));
        assert!(load_pose_json_bytes(b"[]", None).is_err());
    }

    #[test]
    fn canonical_out_of_range_is_parse_error() {
        let mut frame = vec![0.0; POSE_DIM];
        frame[7] = 1.5;
        let json = serde_json::json!({"fps": 30, "source_id": "x", "frames": [vec![0.0; POSE_DIM], frame]});
        match load_pose_json_bytes(json.to_string().as_bytes(), None) {
            Err(Error::Parse { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn directory_of_records_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, x) in [("f_002.json", 300.0), ("f_000.json", 100.0), ("f_001.json", 200.0)] {
            let kp: Vec<f64> = (0..KEYPOINTS).flat_map(|_| [x, 100.0, 1.0]).collect();
            fs::write(dir.path().join(name), record(Some(kp)).to_string()).unwrap();
        }
        let image = ImageSize { width: 400.0, height: 200.0 };
        let d = load_pose_json(dir.path(), Some(image)).unwrap();
        let xs: Vec<f64> = d.frames.iter().map(|f| f.keypoint(0).0).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn synth_frame_count_and_determinism() {
        let cfg = SynthConfig { seed: 7, ..Default::default() };
        let a = synth_dance(&cfg).unwrap();
        assert_eq!(a.len(), 360);
        assert_eq!(a, synth_dance(&cfg).unwrap());
        let b = synth_dance(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.frames, b.frames);
    }

    #[test]
    fn synth_repeated_motif_without_noise_is_constant_within_segments() {
        let cfg = SynthConfig {
            duration_s: 2.0,
            motif_len: 2,
            motif: Some(vec![0, 0]),
            noise_std: 0.0,
            ..Default::default()
        };
        let d = synth_dance(&cfg).unwrap();
        assert!(d.frames.iter().all(|f| *f == d.frames[0]));
        let m = dance_sim_matrix(&d, None).unwrap();
        for i in 0..m.size() {
            for j in 0..m.size() {
                assert!((m.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synth_rejects_bad_config() {
        let bad = [
            SynthConfig { duration_s: 0.0, ..Default::default() },
            SynthConfig { n_base_poses: 1, ..Default::default() },
            SynthConfig { noise_std: -0.1, ..Default::default() },
            SynthConfig { motif: Some(vec![0, 9, 1, 0, 1, 0]), ..Default::default() },
        ];
        for cfg in bad {
            assert!(synth_dance(&cfg).is_err(), "{cfg:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn synth_output_satisfies_pose_invariants(
            duration in 0.1f64..6.0,
            fps in 1u32..60,
            n_base in 2usize..6,
            motif_len in 1usize..8,
            noise in 0.0f64..2.0,
            seed in any::<u64>(),
        ) {
            let cfg = SynthConfig {
                duration_s: duration, fps, n_base_poses: n_base, motif_len,
                noise_std: noise, seed, motif: None, ease_frac: 0.2,
            };
            prop_assume!(cfg.frame_count() > 0);
            let d = synth_dance(&cfg).unwrap();
            prop_assert_eq!(d.len(), cfg.frame_count());
            for f in &d.frames {
                prop_assert!(PoseFrame::new(*f.coords()).is_ok());
            }
        }

        #[test]
        fn pixel_round_trip(px in 0.0f64..1920.0, py in 0.0f64..1080.0) {
            let p = normalize_keypoints(&uniform_raw(px, py, 1.0), 1920.0, 1080.0, None).unwrap();
            let (x, y) = p.keypoint(0);
            prop_assert!(((x + 1.0) / 2.0 * 1920.0 - px).abs() < 1e-9);
            prop_assert!(((y + 1.0) / 2.0 * 1080.0 - py).abs() < 1e-9);
        }

        #[test]
        fn normalization_is_monotone(a in 0.0f64..640.0, b in 0.0f64..640.0) {
            let pa = normalize_keypoints(&uniform_raw(a, 0.0, 1.0), 640.0, 480.0, None).unwrap();
            let pb = normalize_keypoints(&uniform_raw(b, 0.0, 1.0), 640.0, 480.0, None).unwrap();
            prop_assert_eq!(a < b, pa.keypoint(0).0 < pb.keypoint(0).0);
        }

        #[test]
        fn canonical_round_trip(seed in any::<u64>(), n in 1usize..40, fps in 1u32..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..n).map(|_| random_pose(&mut rng)).collect();
            let d = DanceSequence::new(frames, fps, "rt").unwrap();
            let back = load_pose_json_bytes(d.to_canonical_json().unwrap().as_bytes(), None).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}

//! Python bindings: `import dance2music`.

use std::sync::Arc;

use ::dance2music as d2m;
use d2m::baseline::{baseline_generate as gen_baseline, fit_threshold as fit, BaselineConfig};
use d2m::net::{load_params, online_generate, ModelConfig, ModelParams, Sampling};
use d2m::pose::{load_pose_json, SynthConfig};
use d2m::search::SearchConfig;
use d2m::stream::{ServedModel, Session as CoreSession};
use d2m::{DanceSequence, GeneratorTag, PoseFrame};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn err(e: d2m::Error) -> PyErr {
    match e {
        d2m::Error::InvalidInput(m) => PyValueError::new_err(m),
        d2m::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Note lists go back to Python as `list[int]` rather than `bytes`.
fn ints(v: Vec<u8>) -> Vec<u32> {
    v.into_iter().map(u32::from).collect()
}

fn tag(name: &str) -> PyResult<GeneratorTag> {
    match name {
        "offline" => Ok(GeneratorTag::Offline),
        "baseline" => Ok(GeneratorTag::Baseline),
        "online" => Ok(GeneratorTag::Online),
        other => Err(PyValueError::new_err(format!("unknown generator `{other}`"))),
    }
}

/// A dance: 36-value poses at a fixed frame rate.
#[pyclass(name = "Dance", frozen)]
struct Dance {
    inner: DanceSequence,
}

#[pymethods]
impl Dance {
    #[new]
    #[pyo3(signature = (frames, fps=30, source_id=String::new()))]
    fn new(frames: Vec<Vec<f64>>, fps: u32, source_id: String) -> PyResult<Self> {
        let frames = frames
            .iter()
            .map(|f| PoseFrame::from_slice(f))
            .collect::<d2m::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Dance { inner: DanceSequence::new(frames, fps, source_id).map_err(err)? })
    }

    /// Loads a canonical pose file, or estimator records when the image size is given.
    #[staticmethod]
    #[pyo3(signature = (path, image_width=None, image_height=None))]
    fn load(path: &str, image_width: Option<f64>, image_height: Option<f64>) -> PyResult<Self> {
        let image = match (image_width, image_height) {
            (Some(width), Some(height)) => Some(d2m::pose::ImageSize { width, height }),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both image_width and image_height")),
        };
        Ok(Dance { inner: load_pose_json(path, image).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn fps(&self) -> u32 {
        self.inner.fps
    }

    #[getter]
    fn source_id(&self) -> String {
        self.inner.source_id.clone()
    }

    #[getter]
    fn frames(&self) -> Vec<Vec<f64>> {
        self.inner.frames.iter().map(|f| f.coords().to_vec()).collect()
    }

    fn truncated(&self, n: usize) -> Self {
        Dance { inner: self.inner.truncated(n) }
    }

    /// Pairwise cosine similarity of all frames.
    fn similarity_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        let m = d2m::simcorr::dance_sim_matrix(&self.inner, None).map_err(err)?;
        Ok((0..m.size()).map(|i| m.row(i).to_vec()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dance(frames={}, fps={}, source_id={:?})", self.inner.len(), self.inner.fps, self.inner.source_id)
    }
}

/// Notes with their timing grid and the generator that produced them.
#[pyclass(name = "NoteSequence", frozen)]
struct Notes {
    inner: d2m::NoteSequence,
}

#[pymethods]
impl Notes {
    #[new]
    #[pyo3(signature = (notes, k=6, fps=30, generator="offline"))]
    fn new(notes: Vec<u8>, k: u32, fps: u32, generator: &str) -> PyResult<Self> {
        Ok(Notes { inner: d2m::NoteSequence::new(notes, k, fps, tag(generator)?).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Notes { inner: d2m::NoteSequence::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn to_midi<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.to_midi_bytes().map_err(err)?))
    }

    fn write_midi(&self, path: &str) -> PyResult<usize> {
        d2m::music::write_midi(&self.inner, path).map_err(err)
    }

    #[getter]
    fn notes(&self) -> Vec<u32> {
        ints(self.inner.notes.clone())
    }

    #[getter]
    fn midi_pitches(&self) -> Vec<u32> {
        self.inner.events().iter().map(|e| u32::from(e.midi_pitch)).collect()
    }

    #[getter]
    fn k(&self) -> u32 {
        self.inner.k
    }

    #[getter]
    fn fps(&self) -> u32 {
        self.inner.fps
    }

    #[getter]
    fn generator(&self) -> &'static str {
        self.inner.generator_tag.as_str()
    }

    fn __len__(&self) -> usize {
        self.inner.notes.len()
    }

    fn __repr__(&self) -> String {
        format!("NoteSequence({:?}, generator={:?})", self.inner.notes, self.inner.generator_tag.as_str())
    }
}

/// Weights of the online network.
#[pyclass(name = "Model", frozen)]
struct Model {
    inner: Arc<ModelParams>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model { inner: Arc::new(load_params(path, None).map_err(err)?) })
    }

    /// Untrained weights for a preset (`desk` or `paper`).
    #[staticmethod]
    #[pyo3(signature = (preset="desk", seed=0))]
    fn init(preset: &str, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig::preset(preset).map_err(err)?;
        Ok(Model { inner: Arc::new(ModelParams::init(&cfg, seed).map_err(err)?) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.config.k()
    }

    #[getter]
    fn num_values(&self) -> usize {
        self.inner.num_values()
    }

    /// Notes for a whole dance, as the streaming server would emit them.
    #[pyo3(signature = (dance, sampling="argmax", seed=0))]
    fn generate(&self, dance: PyRef<'_, Dance>, sampling: &str, seed: u64) -> PyResult<Vec<u32>> {
        online_generate(&self.inner, &dance.inner, parse_sampling(sampling, seed)?).map(ints).map_err(err)
    }
}

fn parse_sampling(s: &str, seed: u64) -> PyResult<Sampling> {
    Ok(match s.parse::<Sampling>().map_err(err)? {
        Sampling::Temperature { tau, .. } => Sampling::Temperature { tau, seed },
        other => other,
    })
}

/// One streaming session; feed it the JSON messages a WebSocket client would send.
#[pyclass(name = "StreamSession")]
struct StreamSession {
    inner: CoreSession,
}

#[pymethods]
impl StreamSession {
    #[new]
    #[pyo3(signature = (model, session_id=1, sampling="argmax", seed=0))]
    fn new(model: PyRef<'_, Model>, session_id: u64, sampling: &str, seed: u64) -> PyResult<Self> {
        let served = ServedModel {
            params: model.inner.clone(),
            sampling: parse_sampling(sampling, seed)?,
            tag: "python".into(),
        };
        Ok(StreamSession { inner: CoreSession::new(session_id, served) })
    }

    /// Returns `(replies, closed)` with each reply as a JSON string.
    fn handle(&mut self, message: &str) -> PyResult<(Vec<String>, bool)> {
        let out = self.inner.handle_text(message);
        let replies = out
            .replies
            .iter()
            .map(|r| r.to_json().map_err(err))
            .collect::<PyResult<Vec<_>>>()?;
        Ok((replies, out.close))
    }

    #[getter]
    fn closed(&self) -> bool {
        self.inner.is_closed()
    }
}

#[pyfunction]
#[pyo3(signature = (duration_s=12.0, fps=30, n_base_poses=4, motif_len=6, noise_std=0.03, seed=0))]
fn synth_dance(
    duration_s: f64,
    fps: u32,
    n_base_poses: usize,
    motif_len: usize,
    noise_std: f64,
    seed: u64,
) -> PyResult<Dance> {
    let cfg = SynthConfig { duration_s, fps, n_base_poses, motif_len, noise_std, seed, ..SynthConfig::default() };
    Ok(Dance { inner: d2m::pose::synth_dance(&cfg).map_err(err)? })
}

/// Offline beam search; `window_notes` equal to the note count gives global history.
#[pyfunction]
#[pyo3(signature = (dance, k=6, beam_width=50, window_notes=10))]
fn beam_generate(dance: PyRef<'_, Dance>, k: usize, beam_width: usize, window_notes: usize) -> PyResult<Vec<u32>> {
    let cfg = SearchConfig { k, beam_width, window_notes, ..SearchConfig::default() };
    d2m::search::beam_generate(&dance.inner, &cfg).map(ints).map_err(err)
}

/// Brute-force optimum for short dances: `(notes, score)` under the windowed objective.
#[pyfunction]
#[pyo3(signature = (dance, k=6, window_notes=10))]
fn exhaustive_generate(dance: PyRef<'_, Dance>, k: usize, window_notes: usize) -> PyResult<(Vec<u32>, f64)> {
    let cfg = SearchConfig { k, window_notes, ..SearchConfig::default() };
    let r = d2m::search::exhaustive_generate(&dance.inner, &cfg).map_err(err)?;
    Ok((ints(r.windowed.notes), r.windowed.score))
}

#[pyfunction]
#[pyo3(signature = (dances, percentile=80.0, k=6))]
fn fit_threshold(dances: Vec<PyRef<'_, Dance>>, percentile: f64, k: usize) -> PyResult<f64> {
    let corpus: Vec<DanceSequence> = dances.iter().map(|d| d.inner.clone()).collect();
    let cfg = BaselineConfig { k, percentile, ..BaselineConfig::default() };
    fit(&corpus, &cfg).map_err(err)
}

/// Threshold baseline; the threshold is fitted on the dance itself when omitted.
#[pyfunction]
#[pyo3(signature = (dance, threshold=None, percentile=80.0, seed=0, k=6))]
fn baseline_generate(
    dance: PyRef<'_, Dance>,
    threshold: Option<f64>,
    percentile: f64,
    seed: u64,
    k: usize,
) -> PyResult<Vec<u32>> {
    let cfg = BaselineConfig { k, percentile, seed, ..BaselineConfig::default() };
    let threshold = match threshold {
        Some(t) => t,
        None => fit(std::slice::from_ref(&dance.inner), &cfg).map_err(err)?,
    };
    gen_baseline(&dance.inner, threshold, &cfg).map(ints).map_err(err)
}

/// Pearson correlation between the dance and music similarity matrices.
#[pyfunction]
#[pyo3(signature = (dance, notes, k=6))]
fn global_correlation(dance: PyRef<'_, Dance>, notes: Vec<u8>, k: usize) -> PyResult<f64> {
    d2m::simcorr::global_correlation(&dance.inner, &notes, k).map_err(err)
}

#[pyfunction]
fn cosine_sim(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    d2m::simcorr::cosine_sim(&a, &b).map_err(err)
}

#[pyfunction]
fn ordinal_to_midi(ordinal: u8) -> PyResult<u8> {
    d2m::music::ordinal_to_midi(ordinal).map_err(err)
}

#[pyfunction]
fn next_note_accuracy(pred: Vec<u8>, labels: Vec<u8>) -> PyResult<f64> {
    d2m::eval::next_note_accuracy(&pred, &labels).map_err(err)
}

#[pyfunction]
fn flatness(notes: Vec<u8>) -> usize {
    d2m::eval::flatness(&notes)
}

#[pymodule(name = "dance2music")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", d2m::VERSION)?;
    m.add_class::<Dance>()?;
    m.add_class::<Notes>()?;
    m.add_class::<Model>()?;
    m.add_class::<StreamSession>()?;
    m.add_function(wrap_pyfunction!(synth_dance, m)?)?;
    m.add_function(wrap_pyfunction!(beam_generate, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_generate, m)?)?;
    m.add_function(wrap_pyfunction!(global_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_sim, m)?)?;
    m.add_function(wrap_pyfunction!(ordinal_to_midi, m)?)?;
    m.add_function(wrap_pyfunction!(next_note_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(flatness, m)?)?;
    Ok(())
}

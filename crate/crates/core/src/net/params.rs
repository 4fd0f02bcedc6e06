use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};
use crate::error::{Error, Result};
use crate::music::NUM_NOTES;

const MAGIC: &[u8; 4] = b"D2MW";
const FORMAT_VERSION: u32 = 1;

/// A named, dense, row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![T::zero(); len],
        }
    }
}

/// All network weights, in a fixed order: conv layers (weight, bias), LSTM
/// (input weights, recurrent weights, bias), hidden FC layers, output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

/// Weights as stored on disk and used for inference.
pub type ModelParams = Params<f32>;

/// Positions of each layer's tensors inside [`Params::tensors`].
pub(crate) struct Layout {
    pub convs: usize,
    pub fcs: usize,
}

impl Layout {
    pub fn of(cfg: &ModelConfig) -> Self {
        Layout {
            convs: cfg.conv_filters.len(),
            fcs: cfg.fc_sizes.len(),
        }
    }
    pub fn conv(&self, l: usize) -> (usize, usize) {
        (2 * l, 2 * l + 1)
    }
    pub fn lstm(&self) -> (usize, usize, usize) {
        let base = 2 * self.convs;
        (base, base + 1, base + 2)
    }
    pub fn fc(&self, l: usize) -> (usize, usize) {
        let base = 2 * self.convs + 3 + 2 * l;
        (base, base + 1)
    }
    pub fn head(&self) -> (usize, usize) {
        self.fc(self.fcs)
    }
}

impl<T: Scalar> Params<T> {
    /// Zero-valued parameters with the shapes required by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut tensors = Vec::new();
        let mut cin = 1;
        let kk = cfg.kernel;
        for (l, &cout) in cfg.conv_filters.iter().enumerate() {
            tensors.push(Tensor::zeros(format!("conv{l}.weight"), vec![cout, cin, kk, kk]));
            tensors.push(Tensor::zeros(format!("conv{l}.bias"), vec![cout]));
            cin = cout;
        }
        let h = cfg.rnn_hidden;
        tensors.push(Tensor::zeros("lstm.w_ih", vec![4 * h, NUM_NOTES]));
        tensors.push(Tensor::zeros("lstm.w_hh", vec![4 * h, h]));
        tensors.push(Tensor::zeros("lstm.bias", vec![4 * h]));
        let mut fin = cin + h;
        for (l, &fout) in cfg.fc_sizes.iter().enumerate() {
            tensors.push(Tensor::zeros(format!("fc{l}.weight"), vec![fout, fin]));
            tensors.push(Tensor::zeros(format!("fc{l}.bias"), vec![fout]));
            fin = fout;
        }
        tensors.push(Tensor::zeros("head.weight", vec![cfg.classes, fin]));
        tensors.push(Tensor::zeros("head.bias", vec![cfg.classes]));
        Ok(Params {
            config: cfg.clone(),
            tensors,
        })
    }

    /// He-scaled normal weights for conv/FC layers, small uniform LSTM
    /// weights, zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = Layout::of(cfg);
        let he = |t: &mut Tensor<T>, rng: &mut ChaCha8Rng, gain: f64| {
            let fan_in: usize = t.shape[1..].iter().product();
            let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("std");
            t.data
                .iter_mut()
                .for_each(|v| *v = T::from_f64_lossy(dist.sample(rng)));
        };
        for l in 0..layout.convs {
            he(&mut p.tensors[layout.conv(l).0], &mut rng, 2.0);
        }
        let (ih, hh, _) = layout.lstm();
        let bound = 1.0 / (cfg.rnn_hidden as f64).sqrt();
        for idx in [ih, hh] {
            p.tensors[idx]
                .data
                .iter_mut()
                .for_each(|v| *v = T::from_f64_lossy(rng.gen_range(-bound..bound)));
        }
        for l in 0..layout.fcs {
            he(&mut p.tensors[layout.fc(l).0], &mut rng, 2.0);
        }
        he(&mut p.tensors[layout.head().0], &mut rng, 1.0);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t
                        .data
                        .iter()
                        .map(|v| U::from_f64_lossy(v.to_f64().expect("finite")))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

impl ModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.num_values());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let words = self.config.architecture_words();
        put_u32(&mut out, words.len() as u32);
        words.iter().for_each(|&w| put_u32(&mut out, w));
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.shape.len() as u32);
            t.shape.iter().for_each(|&d| put_u32(&mut out, d as u32));
            t.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out
    }

    /// Decodes a weight file. Training hyperparameters are not stored; they
    /// come back as the desk defaults.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a weight file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported weight format version {version}")));
        }
        let n = r.u32()? as usize;
        let words = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let config = ModelConfig::from_architecture_words(&words)
            .ok_or_else(|| Error::Format("malformed config block".into()))?;
        let expected = Params::<f32>::zeros(&config)
            .map_err(|e| Error::Format(format!("invalid config block: {e}")))?;
        let count = r.u32()? as usize;
        if count != expected.tensors.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {count}",
                expected.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for want in &expected.tensors {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if name != want.name || shape != want.shape {
                return Err(Error::Format(format!(
                    "tensor `{name}` {shape:?} does not match expected `{}` {:?}",
                    want.name, want.shape
                )));
            }
            let vals = shape.iter().product::<usize>();
            let raw = r.take(4 * vals)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        let params = Params { config, tensors };
        if !params.all_finite() {
            return Err(Error::Format("weights contain non-finite values".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Loads weights, optionally checking them against the architecture the caller expects.
pub fn load_params(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<ModelParams> {
    let params = ModelParams::from_bytes(&fs::read(path)?)?;
    if let Some(cfg) = expected {
        if !params.config.same_architecture(cfg) {
            return Err(Error::Format(format!(
                "weight file architecture {:?} does not match requested {:?}",
                params.config.architecture_words(),
                cfg.architecture_words()
            )));
        }
    }
    Ok(params)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

//! Dataset (`NODS`) and checkpoint (`NOCK`) files.
//!
//! Both share one container: four magic bytes, a `u32` little-endian format
//! version, a `u32` little-endian header length, a UTF-8 JSON header and a
//! payload of little-endian `f64` values whose length the header fixes
//! exactly. Saving a loaded file reproduces it byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use neurop_core::experiments::Architecture;
use neurop_core::pde::{Dataset, DatasetSpec, Sample};
use neurop_core::train::{GridModel, LossSpec};
use neurop_core::{GridFunction, Tensor};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::AnyModel;

pub const DATASET_MAGIC: [u8; 4] = *b"NODS";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NOCK";
pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode<H: Serialize>(magic: [u8; 4], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).context("header too large")?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Splits a container into its parsed header and the raw payload bytes.
fn decode<H: DeserializeOwned>(magic: [u8; 4], bytes: &[u8]) -> Result<(H, &[u8])> {
    ensure!(bytes.len() >= 12, "file is {} bytes, shorter than the fixed preamble", bytes.len());
    ensure!(bytes[..4] == magic, "bad magic {:?}, expected {:?}", String::from_utf8_lossy(&bytes[..4]), String::from_utf8_lossy(&magic));
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    ensure!(version == FORMAT_VERSION, "unsupported format version {version}, this build reads {FORMAT_VERSION}");
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    ensure!(bytes.len() >= 12 + len, "header length {len} runs past the end of the file");
    let mut de = serde_json::Deserializer::from_slice(&bytes[12..12 + len]);
    let header = serde_path_to_error::deserialize(&mut de).context("parsing file header")?;
    Ok((header, &bytes[12 + len..]))
}

fn read_f64s(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    ensure!(payload.len() == 8 * count, "payload holds {} bytes, header implies {}", payload.len(), 8 * count);
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayLayout {
    pub name: String,
    /// `[channels, n_1, ..., n_d]`.
    pub shape: Vec<usize>,
    pub periodic: bool,
}

impl ArrayLayout {
    fn of(name: &str, g: &GridFunction) -> Self {
        ArrayLayout { name: name.into(), shape: g.values().shape().to_vec(), periodic: g.periodic() }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub n_samples: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Arrays stored for every sample, in payload order.
    pub arrays: Vec<ArrayLayout>,
}

fn sample_arrays(s: &Sample) -> Vec<(&'static str, &GridFunction)> {
    let mut out = vec![("input", &s.input), ("output", &s.output)];
    if let Some(g) = &s.input_high {
        out.push(("input_high", g));
    }
    if let Some(g) = &s.output_high {
        out.push(("output_high", g));
    }
    out
}

pub fn encode_dataset(data: &Dataset) -> Result<Vec<u8>> {
    let arrays: Vec<ArrayLayout> = match data.samples.first() {
        Some(s) => sample_arrays(s).into_iter().map(|(n, g)| ArrayLayout::of(n, g)).collect(),
        None => Vec::new(),
    };
    let mut payload = Vec::with_capacity(data.samples.len() * arrays.iter().map(ArrayLayout::len).sum::<usize>());
    for (i, s) in data.samples.iter().enumerate() {
        let these = sample_arrays(s);
        ensure!(
            these.len() == arrays.len() && these.iter().zip(&arrays).all(|((n, g), l)| ArrayLayout::of(n, g) == *l),
            "sample {i} does not share the layout of sample 0"
        );
        for (_, g) in these {
            ensure!(!g.values().is_complex(), "sample {i} holds a complex array");
            payload.extend_from_slice(g.values().data());
        }
    }
    let header = DatasetHeader {
        spec: data.spec.clone(),
        seed: data.seed,
        n_samples: data.samples.len(),
        train: data.train.clone(),
        test: data.test.clone(),
        arrays,
    };
    encode(DATASET_MAGIC, &header, &payload)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (h, payload): (DatasetHeader, _) = decode(DATASET_MAGIC, bytes)?;
    let per_sample: usize = h.arrays.iter().map(ArrayLayout::len).sum();
    let values = read_f64s(payload, h.n_samples * per_sample)?;
    for name in ["input", "output"] {
        ensure!(h.n_samples == 0 || h.arrays.iter().any(|a| a.name == name), "dataset header lists no `{name}` array");
    }
    let mut names: Vec<&str> = h.arrays.iter().map(|a| a.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    ensure!(names.len() == h.arrays.len(), "dataset header repeats an array name");
    let mut samples = Vec::with_capacity(h.n_samples);
    let mut off = 0;
    for _ in 0..h.n_samples {
        let mut s = Sample {
            input: GridFunction::zeros(&[1], 1, true)?,
            output: GridFunction::zeros(&[1], 1, true)?,
            input_high: None,
            output_high: None,
        };
        for a in &h.arrays {
            let t = Tensor::new(&a.shape, values[off..off + a.len()].to_vec())?;
            off += a.len();
            let g = GridFunction::new(t, a.periodic)?;
            match a.name.as_str() {
                "input" => s.input = g,
                "output" => s.output = g,
                "input_high" => s.input_high = Some(g),
                "output_high" => s.output_high = Some(g),
                other => bail!("unknown dataset array `{other}`"),
            }
        }
        samples.push(s);
    }
    let mut seen = vec![false; h.n_samples];
    for &i in h.train.iter().chain(&h.test) {
        ensure!(i < h.n_samples && !seen[i], "split index {i} is out of range or repeated");
        seen[i] = true;
    }
    Ok(Dataset { spec: h.spec, seed: h.seed, samples, train: h.train, test: h.test })
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<Vec<u8>> {
    let bytes = encode_dataset(data)?;
    write_atomic(path, &bytes)?;
    Ok(bytes)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_dataset(&bytes).with_context(|| format!("loading dataset {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorLayout {
    pub shape: Vec<usize>,
    /// Complex tensors store all real parts, then all imaginary parts.
    pub complex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub seed: u64,
    /// Training epochs completed when the parameters were taken.
    pub step: usize,
    pub loss: LossSpec,
    pub tensors: Vec<TensorLayout>,
}

/// A model with the bookkeeping needed to rebuild and describe it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub seed: u64,
    pub step: usize,
    pub loss: LossSpec,
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let params = c.model.params();
    let mut payload = Vec::with_capacity(params.iter().map(|t| t.len() * if t.is_complex() { 2 } else { 1 }).sum());
    let tensors = params
        .iter()
        .map(|t| {
            payload.extend_from_slice(t.data());
            if let Some(im) = t.imag() {
                payload.extend_from_slice(im);
            }
            TensorLayout { shape: t.shape().to_vec(), complex: t.is_complex() }
        })
        .collect();
    let header = CheckpointHeader { architecture: c.model.architecture(), seed: c.seed, step: c.step, loss: c.loss, tensors };
    encode(CHECKPOINT_MAGIC, &header, &payload)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (h, payload): (CheckpointHeader, _) = decode(CHECKPOINT_MAGIC, bytes)?;
    let count: usize = h.tensors.iter().map(|t| t.shape.iter().product::<usize>() * if t.complex { 2 } else { 1 }).sum();
    let values = read_f64s(payload, count)?;
    let mut off = 0;
    let mut take = |n: usize| {
        let v = values[off..off + n].to_vec();
        off += n;
        v
    };
    let tensors = h
        .tensors
        .iter()
        .map(|l| {
            let n = l.shape.iter().product();
            let re = take(n);
            Ok(if l.complex { Tensor::complex(&l.shape, re, take(n))? } else { Tensor::new(&l.shape, re)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = AnyModel::init(&h.architecture, h.seed)?;
    model.set_params(&tensors).context("checkpoint tensors do not fit the architecture in its header")?;
    Ok(Checkpoint { model, seed: h.seed, step: h.step, loss: h.loss })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(c)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_checkpoint(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

//! Binary model file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "ARCHMLP\0"
//! version    u32
//! head       u8       0 = softmax, 1 = sigmoid
//! normalize  u8       0/1, L2-normalize input rows
//! vocab      u128     fingerprint of the vocabulary the model was trained on
//! embed_dim  u64      0 when the model was not trained contrastively
//! n_dims     u32, then n_dims x u64
//! n_labels   u32, then per label: u32 byte length + UTF-8 bytes
//! per layer  weights (in x out, row-major) then bias, f64
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{DenseLayer, Head, LabelDict, MlpModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ARCHMLP\0";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.head {
        Head::Softmax => 0,
        Head::Sigmoid => 1,
    });
    out.push(model.normalize_inputs as u8);
    out.extend_from_slice(&model.vocab_fingerprint.to_le_bytes());
    out.extend_from_slice(&(model.embed_dim.unwrap_or(0) as u64).to_le_bytes());
    let dims = model.dims();
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(model.labels.len() as u32).to_le_bytes());
    for label in model.labels.labels() {
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(corrupt(format!("truncated at byte {}", self.pos))),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("dimension overflows usize".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn corrupt(message: String) -> Error {
    Error::Format {
        what: "model file",
        message,
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Compatibility(format!(
            "model file version {version}, this build reads version {VERSION}"
        )));
    }
    let head = match r.u8()? {
        0 => Head::Softmax,
        1 => Head::Sigmoid,
        other => return Err(corrupt(format!("unknown head tag {other}"))),
    };
    let normalize_inputs = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(corrupt(format!("bad normalize flag {other}"))),
    };
    let vocab_fingerprint = u128::from_le_bytes(r.array()?);
    let embed_dim = match r.usize()? {
        0 => None,
        d => Some(d),
    };
    let n_dims = r.u32()? as usize;
    if n_dims < 3 {
        return Err(corrupt(format!("{n_dims} dims")));
    }
    let dims = (0..n_dims).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let n_labels = r.u32()? as usize;
    let mut labels = Vec::with_capacity(n_labels.min(1 << 16));
    for _ in 0..n_labels {
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|e| corrupt(format!("label is not UTF-8: {e}")))?;
        labels.push(text.to_string());
    }
    let dict = LabelDict::new(labels.iter().cloned());
    if dict.labels() != labels.as_slice() {
        return Err(corrupt("label dictionary is not sorted and unique".into()));
    }
    let mut layers = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        let (input, output) = (w[0], w[1]);
        let weights = r.f64s(input * output)?;
        let bias = r.f64s(output)?;
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((input, output), weights)
                .map_err(|e| corrupt(e.to_string()))?,
            bias: Array1::from(bias),
        });
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut model = MlpModel::from_layers(layers, head, dict)?;
    model.embed_dim = embed_dim;
    model.vocab_fingerprint = vocab_fingerprint;
    model.normalize_inputs = normalize_inputs;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    model_from_bytes(&fs::read(path)?)
}

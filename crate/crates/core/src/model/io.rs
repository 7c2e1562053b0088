//! Model files: magic `HRTFCNN1`, a little-endian `u32` length, a JSON layer
//! manifest, then every parameter as little-endian `f64` in manifest order
//! (per layer: weights, then biases).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::framing;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{param_blocks, CnnModel, ModelMeta};

pub const MODEL_MAGIC: &[u8; 8] = b"HRTFCNN1";

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct LayerEntry {
    name: String,
    weight_shape: Vec<usize>,
    bias_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layers: Vec<LayerEntry>,
    n_params: usize,
    #[serde(flatten)]
    meta: ModelMeta,
}

fn layer_entries() -> Vec<LayerEntry> {
    param_blocks()
        .into_iter()
        .map(|b| LayerEntry {
            name: b.name.to_string(),
            weight_shape: b.weight_shape.clone(),
            bias_len: b.bias.len(),
        })
        .collect()
}

pub fn write_model_to<T: Scalar, W: Write>(model: &CnnModel<T>, w: &mut W) -> Result<()> {
    let manifest = Manifest {
        layers: layer_entries(),
        n_params: model.params().len(),
        meta: model.meta.clone(),
    };
    framing::write_header(w, MODEL_MAGIC, &serde_json::to_vec(&manifest)?)?;
    let mut payload = Vec::with_capacity(model.params().len() * 8);
    for p in model.params() {
        payload.extend_from_slice(&p.f64().to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_model_from<T: Scalar, R: Read>(r: &mut R) -> Result<CnnModel<T>> {
    let (meta, payload) = framing::read_framed(r, MODEL_MAGIC)?;
    let manifest: Manifest = serde_json::from_slice(&meta)?;
    let want = layer_entries();
    if manifest.layers != want {
        return Err(Error::Shape(format!(
            "model layers {:?} do not match this architecture",
            manifest.layers.iter().map(|l| (&l.name, &l.weight_shape)).collect::<Vec<_>>()
        )));
    }
    let expected = manifest.n_params * 8;
    if payload.len() != expected {
        return Err(Error::Truncated {
            section: "parameters",
            expected,
            found: payload.len(),
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    CnnModel::from_params(params, manifest.meta)
}

pub fn save_model<T: Scalar>(model: &CnnModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_model_to(model, &mut w)?;
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<CnnModel<T>> {
    let path = path.as_ref();
    let run = || read_model_from(&mut BufReader::new(File::open(path)?));
    run().map_err(|e| e.at(path))
}

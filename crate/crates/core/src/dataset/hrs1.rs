//! HRS1: preprocessed magnitude spectra sharing one configuration and axis.
//!
//! Layout: 8-byte magic `HRTFSET1`, a little-endian `u32` length, JSON
//! metadata, then `f64` little-endian magnitudes, row-major
//! `[sample][channel (ipsi, contra)][bin]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coords::Direction;
use crate::dsp::{AxisSpec, HrtfSample, PreprocConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::framing;

pub const HRS1_MAGIC: &[u8; 8] = b"HRTFSET1";

#[derive(Serialize, Deserialize)]
struct Header {
    preproc: String,
    fingerprint: String,
    axis: AxisSpec,
    samples: Vec<SampleMeta>,
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    subject_id: String,
    dataset_id: String,
    direction_index: usize,
    direction: Direction,
}

/// A preprocessed set together with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct HrtfSet<T> {
    pub config: PreprocConfig,
    pub samples: Vec<HrtfSample<T>>,
}

pub fn write_hrtf_set_to<T: Scalar, W: Write>(
    samples: &[HrtfSample<T>],
    config: &PreprocConfig,
    w: &mut W,
) -> Result<()> {
    let first = samples.first().ok_or(Error::Empty("HRTF set"))?;
    let fingerprint = config.fingerprint();
    for s in samples {
        s.validate()?;
        if s.preproc != fingerprint {
            return Err(Error::Config(format!(
                "sample {}/{} was produced by preprocessing {}, not {}",
                s.subject_id, s.direction_index, s.preproc, fingerprint
            )));
        }
        if s.freq_axis != first.freq_axis {
            return Err(Error::Shape("samples use different frequency axes".into()));
        }
    }
    let header = Header {
        preproc: config.to_kv(),
        fingerprint,
        axis: (*first.freq_axis).clone(),
        samples: samples
            .iter()
            .map(|s| SampleMeta {
                subject_id: s.subject_id.clone(),
                dataset_id: s.dataset_id.clone(),
                direction_index: s.direction_index,
                direction: s.direction,
            })
            .collect(),
    };
    framing::write_header(w, HRS1_MAGIC, &serde_json::to_vec(&header)?)?;
    let mut payload = Vec::with_capacity(samples.len() * first.bins() * 16);
    for s in samples {
        for v in s.ipsi.iter().chain(&s.contra) {
            payload.extend_from_slice(&v.f64().to_le_bytes());
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_hrtf_set_from<T: Scalar, R: Read>(r: &mut R) -> Result<HrtfSet<T>> {
    let (meta, payload) = framing::read_framed(r, HRS1_MAGIC)?;
    let header: Header = serde_json::from_slice(&meta)?;
    let config = PreprocConfig::from_kv(&header.preproc)?;
    if config.fingerprint() != header.fingerprint {
        return Err(Error::Format("preprocessing fingerprint does not match its configuration".into()));
    }
    header.axis.validate()?;
    let bins = header.axis.len();
    let expected = header.samples.len() * 2 * bins * 8;
    if payload.len() < expected {
        return Err(Error::Truncated {
            section: "spectra payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after spectra payload",
            payload.len() - expected
        )));
    }
    let axis = Arc::new(header.axis);
    let mut values = payload
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    let samples = header
        .samples
        .into_iter()
        .map(|m| {
            let ipsi: Vec<T> = values.by_ref().take(bins).collect();
            let contra: Vec<T> = values.by_ref().take(bins).collect();
            let s = HrtfSample {
                ipsi,
                contra,
                freq_axis: Arc::clone(&axis),
                direction: m.direction,
                subject_id: m.subject_id,
                dataset_id: m.dataset_id,
                direction_index: m.direction_index,
                preproc: header.fingerprint.clone(),
            };
            s.validate()?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HrtfSet { config, samples })
}

pub fn write_hrtf_set<T: Scalar>(
    samples: &[HrtfSample<T>],
    config: &PreprocConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_hrtf_set_to(samples, config, &mut w)?;
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn read_hrtf_set<T: Scalar>(path: impl AsRef<Path>) -> Result<HrtfSet<T>> {
    let path = path.as_ref();
    let run = || read_hrtf_set_from(&mut BufReader::new(File::open(path)?));
    run().map_err(|e| e.at(path))
}

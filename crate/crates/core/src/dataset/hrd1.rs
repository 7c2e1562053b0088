//! HRD1: portable container for one subject's HRIR set.
//!
//! Layout: 8-byte magic `HRDATA01`, a little-endian `u32` length, that many
//! bytes of UTF-8 JSON metadata, then the impulse responses as little-endian
//! `f32`, row-major `[direction][ear (L, R)][sample]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coords::{Direction, VerticalPolar};
use crate::dsp::Hrir;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::framing;

pub const HRD1_MAGIC: &[u8; 8] = b"HRDATA01";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
}

impl DirectionEntry {
    pub fn to_direction(&self) -> Result<Direction> {
        Ok(Direction::from_vertical(
            VerticalPolar::new(self.azimuth_deg, self.elevation_deg)?,
            self.distance_m,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    subject_id: String,
    dataset_id: String,
    sample_rate_hz: f64,
    n_samples: usize,
    directions: Vec<DirectionEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub dataset_id: String,
    pub sample_rate_hz: f64,
    pub directions: Vec<DirectionEntry>,
    /// Samples per impulse response.
    pub n_samples: usize,
    /// `[direction][ear][sample]`, row-major.
    pub irs: Vec<f32>,
}

impl SubjectRecord {
    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    /// Impulse response for `ear` 0 (left) or 1 (right).
    pub fn ir(&self, direction: usize, ear: usize) -> &[f32] {
        let start = (direction * 2 + ear) * self.n_samples;
        &self.irs[start..start + self.n_samples]
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions.is_empty() {
            return Err(Error::Empty("direction table"));
        }
        if self.n_samples == 0 {
            return Err(Error::Empty("impulse responses"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Format(format!(
                "sample rate {} must be positive",
                self.sample_rate_hz
            )));
        }
        let want = self.directions.len() * 2 * self.n_samples;
        if self.irs.len() != want {
            return Err(Error::LengthMismatch {
                what: "IR payload",
                left: self.irs.len(),
                right: want,
            });
        }
        if let Some(index) = self.irs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "impulse response",
                index,
            });
        }
        for d in &self.directions {
            d.to_direction()?;
        }
        Ok(())
    }

    /// Converts to per-direction HRIRs in the requested precision.
    pub fn to_hrirs<T: Scalar>(&self) -> Result<Vec<Hrir<T>>> {
        self.validate()?;
        let conv = |s: &[f32]| s.iter().map(|&v| T::of(v as f64)).collect::<Vec<T>>();
        self.directions
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Ok(Hrir {
                    left: conv(self.ir(i, 0)),
                    right: conv(self.ir(i, 1)),
                    sample_rate_hz: self.sample_rate_hz,
                    direction: d.to_direction()?,
                    subject_id: self.subject_id.clone(),
                    dataset_id: self.dataset_id.clone(),
                })
            })
            .collect()
    }
}

pub fn write_subject_to<W: Write>(rec: &SubjectRecord, w: &mut W) -> Result<()> {
    rec.validate()?;
    let header = Header {
        subject_id: rec.subject_id.clone(),
        dataset_id: rec.dataset_id.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        n_samples: rec.n_samples,
        directions: rec.directions.clone(),
    };
    framing::write_header(w, HRD1_MAGIC, &serde_json::to_vec(&header)?)?;
    let mut payload = Vec::with_capacity(rec.irs.len() * 4);
    for v in &rec.irs {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_subject_from<R: Read>(r: &mut R) -> Result<SubjectRecord> {
    let (meta, payload) = framing::read_framed(r, HRD1_MAGIC)?;
    let header: Header = serde_json::from_slice(&meta)?;
    let expected = header.directions.len() * 2 * header.n_samples * 4;
    if payload.len() < expected {
        return Err(Error::Truncated {
            section: "IR payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after IR payload",
            payload.len() - expected
        )));
    }
    let irs = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let rec = SubjectRecord {
        subject_id: header.subject_id,
        dataset_id: header.dataset_id,
        sample_rate_hz: header.sample_rate_hz,
        directions: header.directions,
        n_samples: header.n_samples,
        irs,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_subject(rec: &SubjectRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_subject_to(rec, &mut w)?;
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn read_subject(path: impl AsRef<Path>) -> Result<SubjectRecord> {
    let path = path.as_ref();
    let run = || -> Result<SubjectRecord> { read_subject_from(&mut BufReader::new(File::open(path)?)) };
    run().map_err(|e| e.at(path))
}

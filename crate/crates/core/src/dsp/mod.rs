//! HRIR to HRTF-magnitude preprocessing.

mod aee;
mod config;
mod erb;
mod mel;
mod pipeline;
mod resample;
mod spectrum;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coords::Direction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use aee::{aee_normalize, equator_energy, AeeReport, EQUATOR_TOLERANCE_DEG};
pub use config::{AmplitudeScale, FrequencyAxis, Normalization, PreprocConfig, Preset};
pub use erb::{apply_filterbank, build_erb_filterbank, erb_rate, erb_rate_inverse, ErbFilterbank};
pub use mel::{hz_to_mel, mel_to_hz, mel_warp, mel_warp_indices};
pub use pipeline::{preprocess, preprocess_subject, Preprocessed};
pub use resample::{resample, resample_channel, KAISER_BETA, HALF_TAPS};
pub use spectrum::{amplitude_scale, band_cut, to_magnitude, MagnitudeSpectrum, LOG_FLOOR};

/// Time-domain head-related impulse response pair for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hrir<T> {
    pub left: Vec<T>,
    pub right: Vec<T>,
    pub sample_rate_hz: f64,
    pub direction: Direction,
    pub subject_id: String,
    pub dataset_id: String,
}

impl<T: Scalar> Hrir<T> {
    pub fn validate(&self) -> Result<()> {
        if self.left.is_empty() {
            return Err(Error::Empty("HRIR"));
        }
        if self.left.len() != self.right.len() {
            return Err(Error::LengthMismatch {
                what: "HRIR channels",
                left: self.left.len(),
                right: self.right.len(),
            });
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {} must be positive",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Linear,
    Mel,
    Erb,
}

/// Frequency axis of a magnitude representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub kind: AxisKind,
    pub bin_center_hz: Vec<f64>,
}

impl AxisSpec {
    /// Bin centers of an `fft_size`-point real FFT at `sample_rate_hz`.
    pub fn linear(fft_size: usize, sample_rate_hz: f64) -> Self {
        let bins = fft_size / 2 + 1;
        let df = sample_rate_hz / fft_size as f64;
        Self {
            kind: AxisKind::Linear,
            bin_center_hz: (0..bins).map(|k| k as f64 * df).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bin_center_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_center_hz.is_empty()
    }

    /// Centers must be non-decreasing (mel warping may repeat a bin).
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("frequency axis"));
        }
        let strict = self.kind != AxisKind::Mel;
        for w in self.bin_center_hz.windows(2) {
            if w[1] < w[0] || (strict && w[1] == w[0]) {
                return Err(Error::InvalidArgument(
                    "frequency axis centers are not increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Two-channel magnitude spectrum with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HrtfSample<T> {
    pub ipsi: Vec<T>,
    pub contra: Vec<T>,
    pub freq_axis: Arc<AxisSpec>,
    pub direction: Direction,
    pub subject_id: String,
    pub dataset_id: String,
    /// Index of the direction within the subject's measurement table.
    pub direction_index: usize,
    /// Fingerprint of the preprocessing configuration that produced this sample.
    pub preproc: String,
}

impl<T: Scalar> HrtfSample<T> {
    pub fn bins(&self) -> usize {
        self.ipsi.len()
    }

    pub fn label(&self) -> usize {
        self.direction.class_label.index()
    }

    /// Model input layout: ipsilateral channel followed by contralateral.
    pub fn to_input(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.bins());
        v.extend_from_slice(&self.ipsi);
        v.extend_from_slice(&self.contra);
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.ipsi.len() != self.contra.len() {
            return Err(Error::LengthMismatch {
                what: "ipsi/contra",
                left: self.ipsi.len(),
                right: self.contra.len(),
            });
        }
        if self.ipsi.len() != self.freq_axis.len() {
            return Err(Error::LengthMismatch {
                what: "spectrum/axis",
                left: self.ipsi.len(),
                right: self.freq_axis.len(),
            });
        }
        for (i, v) in self.ipsi.iter().chain(&self.contra).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "HRTF magnitude",
                    index: i,
                });
            }
        }
        Ok(())
    }
}

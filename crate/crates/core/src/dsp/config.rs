//! Declarative preprocessing configuration and the three presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::{self, KvMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    None,
    Aee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmplitudeScale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyAxis {
    Linear,
    Mel,
    Erb,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl $ty {
            pub fn keyword(self) -> &'static str {
                match self { $($ty::$variant => $kw),+ }
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($kw => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.keyword())
            }
        }
    };
}

keyword_enum!(Normalization { None => "none", Aee => "aee" });
keyword_enum!(AmplitudeScale { Linear => "linear", Log10 => "log10" });
keyword_enum!(FrequencyAxis { Linear => "linear", Mel => "mel", Erb => "erb" });

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Raw,
    Optimized,
    Perceptual,
}

keyword_enum!(Preset { Raw => "raw", Optimized => "optimized", Perceptual => "perceptual" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocConfig {
    pub normalization: Normalization,
    pub amplitude_scale: AmplitudeScale,
    pub band_cut_hz: Option<(f64, f64)>,
    pub freq_axis: FrequencyAxis,
    pub fft_size: usize,
    pub target_rate_hz: f64,
    pub erb_filters: usize,
    pub erb_low_hz: f64,
    pub erb_high_hz: f64,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self::preset(Preset::Raw)
    }
}

impl PreprocConfig {
    pub fn preset(p: Preset) -> Self {
        let raw = Self {
            normalization: Normalization::None,
            amplitude_scale: AmplitudeScale::Linear,
            band_cut_hz: None,
            freq_axis: FrequencyAxis::Linear,
            fft_size: 512,
            target_rate_hz: 44_100.0,
            erb_filters: 255,
            erb_low_hz: 50.0,
            erb_high_hz: 22_050.0,
        };
        match p {
            Preset::Raw => raw,
            Preset::Optimized => Self {
                normalization: Normalization::Aee,
                band_cut_hz: Some((50.0, 22_050.0)),
                ..raw
            },
            Preset::Perceptual => Self {
                normalization: Normalization::Aee,
                band_cut_hz: Some((50.0, 22_050.0)),
                freq_axis: FrequencyAxis::Erb,
                // 255 ERB centers need distinct FFT bins down to 50 Hz.
                fft_size: 8192,
                ..raw
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::Config(format!("fft_size {} must be even", self.fft_size)));
        }
        if !(self.target_rate_hz > 0.0) {
            return Err(Error::Config("target_rate_hz must be positive".into()));
        }
        let nyquist = self.target_rate_hz / 2.0;
        if let Some((lo, hi)) = self.band_cut_hz {
            if !(lo < hi && hi <= nyquist && lo >= 0.0) {
                return Err(Error::Config(format!(
                    "band cut {lo}..{hi} Hz must satisfy 0 <= low < high <= {nyquist}"
                )));
            }
        }
        if self.freq_axis == FrequencyAxis::Erb
            && (self.erb_filters < 2 || !(self.erb_low_hz < self.erb_high_hz))
        {
            return Err(Error::Config("ERB filterbank settings are invalid".into()));
        }
        Ok(())
    }

    /// Number of bins per channel after preprocessing.
    pub fn output_bins(&self) -> usize {
        match self.freq_axis {
            FrequencyAxis::Erb => self.erb_filters,
            _ => self.fft_size / 2 + 1,
        }
    }

    /// Canonical `key = value` serialization, fixed key order.
    pub fn to_kv(&self) -> String {
        let band = match self.band_cut_hz {
            None => "none".to_string(),
            Some((lo, hi)) => format!("{lo},{hi}"),
        };
        kv::render(&[
            ("normalization", self.normalization.to_string()),
            ("amplitude_scale", self.amplitude_scale.to_string()),
            ("band_cut_hz", band),
            ("freq_axis", self.freq_axis.to_string()),
            ("fft_size", self.fft_size.to_string()),
            ("target_rate_hz", self.target_rate_hz.to_string()),
            ("erb_filters", self.erb_filters.to_string()),
            ("erb_low_hz", self.erb_low_hz.to_string()),
            ("erb_high_hz", self.erb_high_hz.to_string()),
        ])
    }

    /// Parses a key-value file; missing keys take the raw-preset values.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut cfg = Self::preset(Preset::Raw);
        if let Some(preset) = kv.take::<Preset>("preset")? {
            cfg = Self::preset(preset);
        }
        if let Some(v) = kv.take("normalization")? {
            cfg.normalization = v;
        }
        if let Some(v) = kv.take("amplitude_scale")? {
            cfg.amplitude_scale = v;
        }
        if let Some(v) = kv.take_str("band_cut_hz") {
            cfg.band_cut_hz = if v.eq_ignore_ascii_case("none") {
                None
            } else {
                let (lo, hi) = v
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("band_cut_hz {v:?}: expected low,high")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("band_cut_hz {v:?}: {e}")))
                };
                Some((parse(lo)?, parse(hi)?))
            };
        }
        if let Some(v) = kv.take("freq_axis")? {
            cfg.freq_axis = v;
        }
        if let Some(v) = kv.take("fft_size")? {
            cfg.fft_size = v;
        }
        if let Some(v) = kv.take("target_rate_hz")? {
            cfg.target_rate_hz = v;
        }
        if let Some(v) = kv.take("erb_filters")? {
            cfg.erb_filters = v;
        }
        if let Some(v) = kv.take("erb_low_hz")? {
            cfg.erb_low_hz = v;
        }
        if let Some(v) = kv.take("erb_high_hz")? {
            cfg.erb_high_hz = v;
        }
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_kv().as_bytes()))
    }
}

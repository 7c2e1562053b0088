//! Elevation-cue analysis of head-related transfer functions.
//!
//! The pipeline runs from HRIR sets (`dataset`) through magnitude-spectrum
//! preprocessing (`dsp`) to a small 1D CNN that sorts spectra into nine
//! elevation sectors (`model`). `xai` explains the classifier with class
//! activation maps, `eval` scores it and `synth` generates subjects with
//! planted spectral cues so the whole chain can be checked end to end.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod coords;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod kv;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod xai;

pub use coords::{classify, Direction, ElevationClass, InterauralPolar, VerticalPolar};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = model::CnnModel<f64>;
pub type ModelF32 = model::CnnModel<f32>;
pub type Sample = dsp::HrtfSample<f64>;
pub type SampleF32 = dsp::HrtfSample<f32>;
pub type Hrir = dsp::Hrir<f64>;
pub type SaliencyMap = xai::SaliencyMap<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! FFT magnitudes, band cut-off and amplitude scaling.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{AmplitudeScale, AxisSpec, Hrir};

/// Added to magnitudes before taking `log10`, so zeroed bins map to -160 dB.
pub const LOG_FLOOR: f64 = 1e-8;

/// Reusable real-input magnitude analyzer for one FFT size.
pub struct MagnitudeSpectrum<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    size: usize,
}

impl<T: Scalar> MagnitudeSpectrum<T> {
    pub fn new(fft_size: usize) -> Result<Self> {
        if fft_size == 0 || fft_size % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "fft size {fft_size} must be even and positive"
            )));
        }
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            size: fft_size,
        })
    }

    pub fn bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// Zero-pads short signals and drops the tail of long ones.
    pub fn magnitude(&self, x: &[T]) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = (0..self.size)
            .map(|i| Complex::new(x.get(i).copied().unwrap_or_else(T::zero), T::zero()))
            .collect();
        self.fft.process(&mut buf);
        buf[..self.bins()].iter().map(|c| c.norm()).collect()
    }
}

/// Magnitude spectra of the left and right channels, `fft_size / 2 + 1` bins each.
pub fn to_magnitude<T: Scalar>(h: &Hrir<T>, fft_size: usize) -> Result<(Vec<T>, Vec<T>)> {
    h.validate()?;
    let analyzer = MagnitudeSpectrum::new(fft_size)?;
    Ok((analyzer.magnitude(&h.left), analyzer.magnitude(&h.right)))
}

/// Zeroes every bin whose center lies outside `[low_hz, high_hz]`.
pub fn band_cut<T: Scalar>(mag: &[T], axis: &AxisSpec, low_hz: f64, high_hz: f64) -> Result<Vec<T>> {
    if !(low_hz < high_hz) {
        return Err(Error::InvalidArgument(format!(
            "band cut bounds inverted: {low_hz} >= {high_hz}"
        )));
    }
    if mag.len() != axis.len() {
        return Err(Error::LengthMismatch {
            what: "band cut",
            left: mag.len(),
            right: axis.len(),
        });
    }
    Ok(mag
        .iter()
        .zip(&axis.bin_center_hz)
        .map(|(&m, &f)| if f < low_hz || f > high_hz { T::zero() } else { m })
        .collect())
}

pub fn amplitude_scale<T: Scalar>(mag: &[T], kind: AmplitudeScale) -> Vec<T> {
    match kind {
        AmplitudeScale::Linear => mag.to_vec(),
        AmplitudeScale::Log10 => {
            let floor = T::of(LOG_FLOOR);
            let twenty = T::of(20.0);
            mag.iter().map(|&m| twenty * (m + floor).log10()).collect()
        }
    }
}

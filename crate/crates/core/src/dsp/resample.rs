//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Hrir;

/// Zero crossings of the kernel on each side, counted at the lower rate.
pub const HALF_TAPS: usize = 64;
pub const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    /// Kernel half-width in input samples.
    half_width: f64,
    /// Normalized cutoff, cycles per input sample times two.
    bandwidth: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(ratio: f64) -> Self {
        let scale = ratio.min(1.0);
        Self {
            half_width: HALF_TAPS as f64 / scale,
            bandwidth: scale * ROLLOFF,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, u: f64) -> f64 {
        let r = u / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        let x = self.bandwidth * u;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        self.bandwidth * sinc * window
    }
}

/// Resamples one channel from `source_hz` to `target_hz`.
///
/// Output length is `ceil(len * target / source)`. Equal rates return the
/// input unchanged.
pub fn resample_channel<T: Scalar>(x: &[T], source_hz: f64, target_hz: f64) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::Empty("resample input"));
    }
    if !(source_hz > 0.0 && target_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rates must be positive ({source_hz} -> {target_hz})"
        )));
    }
    if source_hz == target_hz {
        return Ok(x.to_vec());
    }
    let ratio = target_hz / source_hz;
    let kernel = Kernel::new(ratio);
    let out_len = (x.len() as f64 * ratio).ceil() as usize;
    let last = x.len() as isize - 1;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let lo = ((t - kernel.half_width).ceil() as isize).max(0);
        let hi = ((t + kernel.half_width).floor() as isize).min(last);
        let mut acc = 0.0;
        for k in lo..=hi {
            acc += x[k as usize].f64() * kernel.eval(t - k as f64);
        }
        out.push(T::of(acc));
    }
    Ok(out)
}

/// Resamples both channels of an HRIR.
pub fn resample<T: Scalar>(h: &Hrir<T>, target_rate_hz: f64) -> Result<Hrir<T>> {
    h.validate()?;
    Ok(Hrir {
        left: resample_channel(&h.left, h.sample_rate_hz, target_rate_hz)?,
        right: resample_channel(&h.right, h.sample_rate_hz, target_rate_hz)?,
        sample_rate_hz: target_rate_hz,
        direction: h.direction,
        subject_id: h.subject_id.clone(),
        dataset_id: h.dataset_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn spectrum_mag(x: &[f64], n: usize) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm()).collect()
    }

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) and I0(8.6) to 12 significant digits.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-12);
        assert!((bessel_i0(8.6) / 750.461_159_563_165_9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_rates_pass_through_bit_identical() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(resample_channel(&x, 44_100.0, 44_100.0).unwrap(), x);
    }

    #[test]
    fn impulse_48k_to_44k1_is_flat_to_17k() {
        let mut x = vec![0.0f64; 512];
        x[200] = 1.0;
        let y = resample_channel(&x, 48_000.0, 44_100.0).unwrap();
        assert_eq!(y.len(), 471);
        let n = 4096;
        let mag = spectrum_mag(&y, n);
        let df = 44_100.0 / n as f64;
        let reference = mag[0];
        for (k, m) in mag.iter().enumerate() {
            if k as f64 * df > 17_000.0 {
                break;
            }
            let db = 20.0 * (m / reference).log10();
            assert!(db.abs() < 0.5, "bin {k} deviates {db} dB");
        }
    }

    #[test]
    fn sine_96k_to_44k1_keeps_frequency_and_level() {
        let src = 96_000.0;
        let x: Vec<f64> = (0..96_000)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / src).sin())
            .collect();
        let y = resample_channel(&x, src, 44_100.0).unwrap();
        assert_eq!(y.len(), 44_100);
        let mag = spectrum_mag(&y, 44_100);
        let peak = mag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // 1 Hz bins.
        assert!((peak as f64 - 1000.0).abs() < 1.0);
        // RMS away from the edges.
        let mid = &y[2000..42_000];
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        let db = 20.0 * (rms * 2f64.sqrt()).log10();
        assert!(db.abs() < 0.5, "level error {db} dB");
    }

    #[test]
    fn high_tone_upsampling_level() {
        // 17 kHz is below 0.4 * 44.1 kHz.
        let src = 44_100.0;
        let x: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 17_000.0 * i as f64 / src).cos())
            .collect();
        let y = resample_channel(&x, src, 48_000.0).unwrap();
        let mid = &y[1000..7000];
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        assert!((20.0 * (rms * 2f64.sqrt()).log10()).abs() < 0.5);
    }

    #[test]
    fn rejects_empty_and_bad_rates() {
        assert!(resample_channel::<f64>(&[], 1.0, 2.0).is_err());
        assert!(resample_channel(&[1.0f64], 0.0, 2.0).is_err());
    }
}

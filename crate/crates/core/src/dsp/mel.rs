//! Mel-scale re-sampling of a linear frequency axis.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{AxisKind, AxisSpec};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn nearest_bin(centers: &[f64], f: f64) -> usize {
    let i = centers.partition_point(|&c| c < f);
    if i == 0 {
        0
    } else if i == centers.len() {
        centers.len() - 1
    } else if f - centers[i - 1] <= centers[i] - f {
        i - 1
    } else {
        i
    }
}

/// Linear-bin indices picked for each of the `axis.len()` mel-spaced points.
///
/// Indices are non-decreasing and may repeat at low frequencies.
pub fn mel_warp_indices(axis: &AxisSpec) -> Result<Vec<usize>> {
    if axis.kind != AxisKind::Linear {
        return Err(Error::InvalidArgument(format!(
            "mel warping needs a linear axis, got {:?}",
            axis.kind
        )));
    }
    axis.validate()?;
    let n = axis.len();
    let centers = &axis.bin_center_hz;
    if n == 1 {
        return Ok(vec![0]);
    }
    let (m0, m1) = (hz_to_mel(centers[0]), hz_to_mel(centers[n - 1]));
    let mut idx: Vec<usize> = (0..n)
        .map(|i| {
            let mel = m0 + (m1 - m0) * i as f64 / (n - 1) as f64;
            nearest_bin(centers, mel_to_hz(mel))
        })
        .collect();
    // Pin the endpoints against round-off in the mel round trip.
    idx[0] = 0;
    idx[n - 1] = n - 1;
    Ok(idx)
}

/// Re-samples `mag` at mel-spaced points without changing its length.
pub fn mel_warp<T: Scalar>(mag: &[T], axis: &AxisSpec) -> Result<(Vec<T>, AxisSpec)> {
    if mag.len() != axis.len() {
        return Err(Error::LengthMismatch {
            what: "mel warp",
            left: mag.len(),
            right: axis.len(),
        });
    }
    let idx = mel_warp_indices(axis)?;
    let out = idx.iter().map(|&i| mag[i]).collect();
    let warped = AxisSpec {
        kind: AxisKind::Mel,
        bin_center_hz: idx.iter().map(|&i| axis.bin_center_hz[i]).collect(),
    };
    Ok((out, warped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_round_trip() {
        for f in [0.0, 100.0, 1000.0, 8000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985_6).abs() < 1e-3);
    }

    #[test]
    fn endpoints_and_monotonicity() {
        let axis = AxisSpec::linear(512, 44_100.0);
        let mag: Vec<f64> = (0..257).map(|i| i as f64).collect();
        let (out, warped) = mel_warp(&mag, &axis).unwrap();
        assert_eq!(out.len(), 257);
        assert_eq!(out[0], mag[0]);
        assert_eq!(out[256], mag[256]);
        assert!(out.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(warped.kind, AxisKind::Mel);
        warped.validate().unwrap();
    }

    #[test]
    fn matches_exhaustive_nearest_search() {
        let axis = AxisSpec::linear(512, 44_100.0);
        let idx = mel_warp_indices(&axis).unwrap();
        let (m0, m1) = (hz_to_mel(0.0), hz_to_mel(22_050.0));
        for (i, &got) in idx.iter().enumerate().skip(1).take(255) {
            let f = mel_to_hz(m0 + (m1 - m0) * i as f64 / 256.0);
            let mut best = 0;
            for k in 0..257 {
                if (axis.bin_center_hz[k] - f).abs() < (axis.bin_center_hz[best] - f).abs() {
                    best = k;
                }
            }
            assert_eq!(got, best, "point {i} at {f} Hz");
        }
        // The mel midpoint specifically.
        let f_mid = mel_to_hz((m0 + m1) / 2.0);
        let want = (f_mid / (44_100.0 / 512.0)).round() as usize;
        assert_eq!(idx[128], want);
    }

    #[test]
    fn rejects_non_linear_axis() {
        let axis = AxisSpec {
            kind: AxisKind::Erb,
            bin_center_hz: vec![1.0, 2.0],
        };
        assert!(mel_warp(&[1.0f64, 2.0], &axis).is_err());
    }
}

//! Raised-cosine filterbank with centers equally spaced on the ERB-rate scale.
//!
//! Each filter is a half-period cosine on the ERB-rate axis reaching zero at
//! its two neighbors' centers, so squared responses of adjacent filters sum
//! to one between centers. Applying the bank integrates over the ERB-rate
//! axis: every FFT bin contributes in proportion to the ERB-rate width it
//! covers, which keeps low and high bands on a comparable footing.

use std::f64::consts::{FRAC_PI_2, LN_10};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{AxisKind, AxisSpec};

const ERB_SCALE: f64 = 21.4;
const ERB_SLOPE: f64 = 0.00437;

/// ERB-rate (Glasberg and Moore) of a frequency in Hz.
pub fn erb_rate(hz: f64) -> f64 {
    ERB_SCALE * (1.0 + ERB_SLOPE * hz).log10()
}

pub fn erb_rate_inverse(erb: f64) -> f64 {
    (10f64.powf(erb / ERB_SCALE) - 1.0) / ERB_SLOPE
}

fn erb_rate_derivative(hz: f64) -> f64 {
    ERB_SCALE * ERB_SLOPE / (LN_10 * (1.0 + ERB_SLOPE * hz))
}

#[derive(Debug, Clone, PartialEq)]
struct FilterRow<T> {
    start: usize,
    weights: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErbFilterbank<T> {
    center_hz: Vec<f64>,
    center_erb: Vec<f64>,
    spacing_erb: f64,
    fft_bins: usize,
    rows: Vec<FilterRow<T>>,
    /// ERB-rate width of each input bin in units of the center spacing.
    bin_measure: Vec<T>,
}

/// Builds `n_filters` cosine filters between `low_hz` and `high_hz` over the
/// bins of a linear `axis`.
///
/// Fails when two neighboring centers fall on the same FFT bin.
pub fn build_erb_filterbank<T: Scalar>(
    n_filters: usize,
    low_hz: f64,
    high_hz: f64,
    axis: &AxisSpec,
) -> Result<ErbFilterbank<T>> {
    if n_filters < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 filters, got {n_filters}"
        )));
    }
    if !(low_hz >= 0.0 && low_hz < high_hz) {
        return Err(Error::InvalidArgument(format!(
            "filterbank range {low_hz}..{high_hz} Hz is invalid"
        )));
    }
    if axis.kind != AxisKind::Linear || axis.len() < 2 {
        return Err(Error::InvalidArgument(
            "filterbank needs a linear axis of at least 2 bins".into(),
        ));
    }
    axis.validate()?;
    let bins = &axis.bin_center_hz;
    let df = (bins[bins.len() - 1] - bins[0]) / (bins.len() - 1) as f64;

    let (e_lo, e_hi) = (erb_rate(low_hz), erb_rate(high_hz));
    let spacing = (e_hi - e_lo) / (n_filters - 1) as f64;
    let center_erb: Vec<f64> = (0..n_filters)
        .map(|k| e_lo + spacing * k as f64)
        .collect();
    let mut center_hz: Vec<f64> = center_erb.iter().map(|&e| erb_rate_inverse(e)).collect();
    center_hz[0] = low_hz;
    center_hz[n_filters - 1] = high_hz;

    let bin_erb: Vec<f64> = bins.iter().map(|&f| erb_rate(f)).collect();
    // Nearest on the ERB-rate axis, which is where the cosine peaks.
    let nearest = |e: f64| -> usize {
        let i = bin_erb.partition_point(|&b| b < e);
        if i == 0 {
            0
        } else if i == bin_erb.len() || e - bin_erb[i - 1] <= bin_erb[i] - e {
            i - 1
        } else {
            i
        }
    };
    let center_bins: Vec<usize> = center_erb.iter().map(|&e| nearest(e)).collect();
    for k in 1..n_filters {
        if center_bins[k] == center_bins[k - 1] {
            return Err(Error::FilterbankUnderResolved {
                first: k - 1,
                second: k,
                bin: center_bins[k],
            });
        }
    }

    let mut rows = Vec::with_capacity(n_filters);
    for &ce in &center_erb {
        let start = bin_erb.partition_point(|&e| e <= ce - spacing);
        let end = bin_erb.partition_point(|&e| e < ce + spacing);
        let weights: Vec<T> = bin_erb[start..end]
            .iter()
            .map(|&e| T::of((FRAC_PI_2 * (e - ce) / spacing).cos().max(0.0)))
            .collect();
        rows.push(FilterRow { start, weights });
    }
    for (k, row) in rows.iter().enumerate() {
        let peak = row
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .map(|(i, _)| row.start + i);
        if peak != Some(center_bins[k]) {
            return Err(Error::FilterbankUnderResolved {
                first: k,
                second: k,
                bin: center_bins[k],
            });
        }
    }
    let bin_measure = bins
        .iter()
        .map(|&f| T::of(erb_rate_derivative(f) * df / spacing))
        .collect();

    Ok(ErbFilterbank {
        center_hz,
        center_erb,
        spacing_erb: spacing,
        fft_bins: bins.len(),
        rows,
        bin_measure,
    })
}

impl<T: Scalar> ErbFilterbank<T> {
    pub fn n_filters(&self) -> usize {
        self.rows.len()
    }

    pub fn fft_bins(&self) -> usize {
        self.fft_bins
    }

    pub fn center_hz(&self) -> &[f64] {
        &self.center_hz
    }

    pub fn center_erb(&self) -> &[f64] {
        &self.center_erb
    }

    pub fn spacing_erb(&self) -> f64 {
        self.spacing_erb
    }

    /// Output axis of [`apply_filterbank`].
    pub fn axis(&self) -> AxisSpec {
        AxisSpec {
            kind: AxisKind::Erb,
            bin_center_hz: self.center_hz.clone(),
        }
    }

    /// Filter responses as a dense `[n_filters x fft_bins]` matrix.
    pub fn weights(&self) -> Vec<Vec<T>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![T::zero(); self.fft_bins];
                dense[row.start..row.start + row.weights.len()].copy_from_slice(&row.weights);
                dense
            })
            .collect()
    }

    /// Per-bin integration weights (ERB-rate width over center spacing).
    pub fn bin_measure(&self) -> &[T] {
        &self.bin_measure
    }

    /// Output of filter `k` for a flat unit input.
    pub fn effective_weight_sum(&self, k: usize) -> T {
        let row = &self.rows[k];
        row.weights
            .iter()
            .zip(&self.bin_measure[row.start..])
            .map(|(&w, &g)| w * g)
            .sum()
    }
}

/// `out[k] = sum_b weights[k][b] * measure[b] * mag[b]`.
pub fn apply_filterbank<T: Scalar>(mag: &[T], fb: &ErbFilterbank<T>) -> Result<Vec<T>> {
    if mag.len() != fb.fft_bins {
        return Err(Error::LengthMismatch {
            what: "filterbank input",
            left: mag.len(),
            right: fb.fft_bins,
        });
    }
    Ok(fb
        .rows
        .iter()
        .map(|row| {
            let span = row.start..row.start + row.weights.len();
            row.weights
                .iter()
                .zip(&fb.bin_measure[span.clone()])
                .zip(&mag[span])
                .map(|((&w, &g), &m)| w * g * m)
                .sum()
        })
        .collect())
}

//! Average-equator-energy normalization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::HrtfSample;

/// Directions within this many degrees of zero vertical elevation count as
/// the equator.
pub const EQUATOR_TOLERANCE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AeeReport {
    /// Mean squared magnitude over the equator ring before scaling.
    pub energy: f64,
    /// Factor every magnitude was multiplied by (`1 / sqrt(energy)`).
    pub gain: f64,
    pub equator_count: usize,
    /// Set when the subject has no measurement within the tolerance and the
    /// ring nearest to zero elevation was used instead.
    pub widened_to_deg: Option<f64>,
}

fn ring_members<T: Scalar>(samples: &[HrtfSample<T>]) -> (Vec<usize>, Option<f64>) {
    let abs_el = |s: &HrtfSample<T>| s.direction.vertical.elevation_deg.abs();
    let exact: Vec<usize> = (0..samples.len())
        .filter(|&i| abs_el(&samples[i]) <= EQUATOR_TOLERANCE_DEG)
        .collect();
    if !exact.is_empty() {
        return (exact, None);
    }
    let nearest = samples.iter().map(abs_el).fold(f64::INFINITY, f64::min);
    let ring = (0..samples.len())
        .filter(|&i| abs_el(&samples[i]) <= nearest + EQUATOR_TOLERANCE_DEG)
        .collect();
    (ring, Some(nearest))
}

/// Mean of `magnitude^2` over the equator ring, both channels and all bins.
pub fn equator_energy<T: Scalar>(samples: &[HrtfSample<T>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("subject measurements"));
    }
    let (ring, _) = ring_members(samples);
    mean_energy(samples, &ring)
}

fn mean_energy<T: Scalar>(samples: &[HrtfSample<T>], ring: &[usize]) -> Result<f64> {
    let mut sum = T::zero();
    let mut count = 0usize;
    for &i in ring {
        let s = &samples[i];
        for &m in s.ipsi.iter().chain(&s.contra) {
            sum += m * m;
        }
        count += s.ipsi.len() + s.contra.len();
    }
    if count == 0 {
        return Err(Error::Empty("equator spectra"));
    }
    Ok(sum.f64() / count as f64)
}

/// Scales all of one subject's magnitudes so the equator ring has unit mean
/// energy.
pub fn aee_normalize<T: Scalar>(samples: &mut [HrtfSample<T>]) -> Result<AeeReport> {
    if samples.is_empty() {
        return Err(Error::Empty("subject measurements"));
    }
    let (ring, widened_to_deg) = ring_members(samples);
    if let Some(deg) = widened_to_deg {
        log::warn!(
            "subject {}: no measurement within {EQUATOR_TOLERANCE_DEG} deg of the equator; using the ring at {deg} deg",
            samples[0].subject_id
        );
    }
    let energy = mean_energy(samples, &ring)?;
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Numerical(format!(
            "equator energy {energy} cannot normalize subject {}",
            samples[0].subject_id
        )));
    }
    let gain = 1.0 / energy.sqrt();
    let g = T::of(gain);
    for s in samples.iter_mut() {
        for m in s.ipsi.iter_mut().chain(s.contra.iter_mut()) {
            *m *= g;
        }
    }
    Ok(AeeReport {
        energy,
        gain,
        equator_count: ring.len(),
        widened_to_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::{Direction, VerticalPolar};
    use crate::dsp::AxisSpec;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sample(el: f64, value: f64, bins: usize) -> HrtfSample<f64> {
        HrtfSample {
            ipsi: vec![value; bins],
            contra: vec![value; bins],
            freq_axis: Arc::new(AxisSpec::linear(2 * (bins - 1), 44_100.0)),
            direction: Direction::from_vertical(VerticalPolar::new(30.0, el).unwrap(), None),
            subject_id: "s1".into(),
            dataset_id: "d".into(),
            direction_index: 0,
            preproc: String::new(),
        }
    }

    #[test]
    fn ones_are_a_fixed_point() {
        let mut set = vec![sample(0.0, 1.0, 9), sample(40.0, 1.0, 9)];
        let r = aee_normalize(&mut set).unwrap();
        assert_eq!(r.energy, 1.0);
        assert!(set.iter().all(|s| s.ipsi.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn twos_scale_to_one() {
        let mut set = vec![sample(0.0, 2.0, 9), sample(-3.0, 2.0, 9), sample(60.0, 4.0, 9)];
        let r = aee_normalize(&mut set).unwrap();
        assert_eq!(r.energy, 4.0);
        assert_eq!(r.equator_count, 2);
        assert!(set[0].ipsi.iter().all(|&v| v == 1.0));
        assert!(set[2].contra.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn widens_to_nearest_ring() {
        let mut set = vec![sample(10.0, 3.0, 5), sample(-10.0, 3.0, 5), sample(40.0, 1.0, 5)];
        let r = aee_normalize(&mut set).unwrap();
        assert_eq!(r.widened_to_deg, Some(10.0));
        assert_eq!(r.equator_count, 2);
        assert!((equator_energy(&set).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_silent_subjects_fail() {
        let mut none: Vec<HrtfSample<f64>> = vec![];
        assert!(aee_normalize(&mut none).is_err());
        let mut silent = vec![sample(0.0, 0.0, 5)];
        assert!(aee_normalize(&mut silent).unwrap_err().is_numerical());
    }

    proptest! {
        #[test]
        fn equator_energy_becomes_one(
            values in proptest::collection::vec((-60.0f64..60.0, 0.01f64..10.0), 2..30),
            seed in 0u64..1000,
        ) {
            let bins = 17;
            let mut set: Vec<HrtfSample<f64>> = values
                .iter()
                .enumerate()
                .map(|(i, &(el, v))| {
                    let mut s = sample(el, v, bins);
                    for (k, m) in s.ipsi.iter_mut().enumerate() {
                        *m *= 1.0 + ((seed as usize + i * 31 + k * 7) % 13) as f64 / 13.0;
                    }
                    s
                })
                .collect();
            let before = set.clone();
            aee_normalize(&mut set).unwrap();
            // Independent recomputation from the raw definition.
            let ring: Vec<&HrtfSample<f64>> = {
                let exact: Vec<_> = set.iter().filter(|s| s.direction.vertical.elevation_deg.abs() <= 5.0).collect();
                if exact.is_empty() {
                    let m = set.iter().map(|s| s.direction.vertical.elevation_deg.abs()).fold(f64::INFINITY, f64::min);
                    set.iter().filter(|s| s.direction.vertical.elevation_deg.abs() <= m + 5.0).collect()
                } else { exact }
            };
            let (mut e, mut n) = (0.0, 0usize);
            for s in &ring {
                for v in s.ipsi.iter().chain(&s.contra) { e += v * v; n += 1; }
            }
            prop_assert!((e / n as f64 - 1.0).abs() < 1e-9);
            // One shared scale factor: bin ratios are unchanged.
            let k = set[0].ipsi[0] / before[0].ipsi[0];
            for (a, b) in set.iter().zip(&before) {
                for (x, y) in a.ipsi.iter().zip(&b.ipsi) {
                    prop_assert!((x / y - k).abs() <= 1e-12 * k);
                }
            }
        }
    }
}

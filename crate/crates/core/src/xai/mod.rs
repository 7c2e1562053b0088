//! Class activation maps and what is built from them: per-sample saliency,
//! occlusion renders, per-class stacks, mean saliency contours, PCA
//! prototypes and sagittal-plane maps.

mod export;
mod prototype;
mod sagittal;

pub use export::{
    read_msc_csv, read_stack, read_stack_from, write_msc_csv, write_saliency_csv, write_stack,
    write_stack_to, STACK_MAGIC,
};
pub use prototype::{nearest_sample, pca, prototype, Pca, PrototypeHrtf};
pub use sagittal::{rank_subjects, sagittal_map, SagittalRow, SAGITTAL_TOLERANCE_DEG};

use serde::{Deserialize, Serialize};

use crate::dsp::HrtfSample;
use crate::error::{Error, Result};
use crate::model::{CnnModel, ForwardTrace, N_CLASSES};
use crate::scalar::Scalar;

/// Samples per forward call when explaining many inputs.
const CHUNK: usize = 64;

/// Raw class activation map over the last-conv positions:
/// `M_c(x) = Σ_k w_k^c A_k(x)`.
pub fn cam<T: Scalar>(trace: &ForwardTrace<T>, model: &CnnModel<T>, class: usize) -> Result<Vec<T>> {
    let w = model.class_weights(class)?;
    let mut m = vec![T::zero(); trace.positions];
    for (k, &wk) in w.iter().enumerate() {
        for (acc, &a) in m.iter_mut().zip(trace.channel(k)) {
            *acc += wk * a;
        }
    }
    Ok(m)
}

/// Upsampled, rectified and max-normalized saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsampled<T> {
    pub values: Vec<T>,
    /// False when nothing survived rectification; `values` is then all zero.
    pub has_positive_evidence: bool,
}

/// Linear interpolation from `raw.len()` to `bins` points with both ends
/// aligned, then ReLU, then division by the maximum.
pub fn upsample_normalize<T: Scalar>(raw: &[T], bins: usize) -> Result<Upsampled<T>> {
    if raw.len() < 2 {
        return Err(Error::InputTooShort { len: raw.len(), min: 2 });
    }
    if bins < 2 {
        return Err(Error::InputTooShort { len: bins, min: 2 });
    }
    let l = raw.len();
    let scale = (l - 1) as f64 / (bins - 1) as f64;
    let mut values: Vec<T> = (0..bins)
        .map(|i| {
            let x = i as f64 * scale;
            let j = (x.floor() as usize).min(l - 2);
            let t = T::of(x - j as f64);
            let v = raw[j] + (raw[j + 1] - raw[j]) * t;
            v.max(T::zero())
        })
        .collect();
    let peak = values.iter().copied().fold(T::zero(), T::max);
    let has_positive_evidence = peak > T::zero();
    if has_positive_evidence {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(Upsampled { values, has_positive_evidence })
}

/// Where a saliency map came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub subject_id: String,
    pub dataset_id: String,
    pub direction_index: usize,
    pub label: usize,
}

impl SampleRef {
    pub fn of<T>(s: &HrtfSample<T>) -> Self {
        Self {
            subject_id: s.subject_id.clone(),
            dataset_id: s.dataset_id.clone(),
            direction_index: s.direction_index,
            label: s.direction.class_label.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    /// Normalized saliency on the input frequency axis.
    pub values: Vec<T>,
    pub class_id: usize,
    pub source: SampleRef,
    /// CAM before upsampling, one value per last-conv position.
    pub raw_cam: Vec<T>,
    pub predicted: usize,
    /// Probability of the predicted class.
    pub confidence: T,
    pub has_positive_evidence: bool,
}

impl<T: Scalar> SaliencyMap<T> {
    /// Builds the map for `class` (or the predicted class) from a trace.
    pub fn from_trace(
        trace: &ForwardTrace<T>,
        model: &CnnModel<T>,
        class: Option<usize>,
        bins: usize,
        source: SampleRef,
    ) -> Result<Self> {
        let (predicted, confidence) = trace.prediction();
        let class_id = class.unwrap_or(predicted);
        let raw_cam = cam(trace, model, class_id)?;
        let up = upsample_normalize(&raw_cam, bins)?;
        Ok(Self {
            values: up.values,
            class_id,
            source,
            raw_cam,
            predicted,
            confidence,
            has_positive_evidence: up.has_positive_evidence,
        })
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.source.label
    }
}

/// Saliency of one sample for `class`, or for its predicted class.
pub fn explain<T: Scalar>(model: &CnnModel<T>, sample: &HrtfSample<T>, class: Option<usize>) -> Result<SaliencyMap<T>> {
    let trace = model.forward(&sample.to_input())?;
    SaliencyMap::from_trace(&trace, model, class, sample.bins(), SampleRef::of(sample))
}

/// Saliencies for many samples, each for its predicted class or `class`.
pub fn explain_all<T: Scalar>(
    model: &CnnModel<T>,
    samples: &[&HrtfSample<T>],
    class: Option<usize>,
) -> Result<Vec<SaliencyMap<T>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let bins = chunk[0].bins();
        let inputs: Vec<Vec<T>> = chunk.iter().map(|s| s.to_input()).collect();
        let refs: Vec<&[T]> = inputs.iter().map(Vec::as_slice).collect();
        for (trace, s) in model.forward_batch(&refs, bins)?.iter().zip(chunk) {
            out.push(SaliencyMap::from_trace(trace, model, class, bins, SampleRef::of(s))?);
        }
    }
    Ok(out)
}

/// Magnitudes weighted by saliency: low saliency fades toward zero.
pub fn occlusion_render<T: Scalar>(magnitudes: &[T], saliency: &[T]) -> Result<Vec<T>> {
    if magnitudes.len() != saliency.len() {
        return Err(Error::LengthMismatch { what: "magnitudes/saliency", left: magnitudes.len(), right: saliency.len() });
    }
    Ok(magnitudes.iter().zip(saliency).map(|(&m, &s)| m * s).collect())
}

/// Saliency rows of one (class, dataset) cell, by descending confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyStack<T> {
    pub class_id: usize,
    pub dataset_id: String,
    pub rows: Vec<SaliencyMap<T>>,
}

impl<T: Scalar> SaliencyStack<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bins(&self) -> Option<usize> {
        self.rows.first().map(|r| r.values.len())
    }

    /// The `m` most confident rows.
    pub fn truncated(&self, m: usize) -> Self {
        Self { rows: self.rows.iter().take(m).cloned().collect(), ..self.clone() }
    }
}

/// Stable sort by confidence, highest first.
fn sort_by_confidence<T: Scalar>(rows: &mut [SaliencyMap<T>]) {
    rows.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(std::cmp::Ordering::Equal));
}

/// Saliencies for `class_id` of the samples of `dataset_id` labelled with
/// that class, optionally only those the model classifies correctly.
pub fn aggregate<T: Scalar>(
    samples: &[HrtfSample<T>],
    model: &CnnModel<T>,
    dataset_id: &str,
    class_id: usize,
    only_correct: bool,
) -> Result<SaliencyStack<T>> {
    if class_id >= N_CLASSES {
        return Err(Error::ClassOutOfRange(class_id));
    }
    let cell: Vec<&HrtfSample<T>> =
        samples.iter().filter(|s| s.dataset_id == dataset_id && s.label() == class_id).collect();
    let mut rows = if cell.is_empty() { vec![] } else { explain_all(model, &cell, Some(class_id))? };
    if only_correct {
        rows.retain(SaliencyMap::is_correct);
    }
    sort_by_confidence(&mut rows);
    Ok(SaliencyStack { class_id, dataset_id: dataset_id.to_string(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSaliencyContour<T> {
    pub class_id: usize,
    pub datasets: Vec<String>,
    /// Mean of the kept rows of each dataset.
    pub per_dataset: Vec<Vec<T>>,
    /// Unweighted mean of `per_dataset`.
    pub msc: Vec<T>,
    /// Rows kept per dataset.
    pub rows_kept: usize,
}

/// Truncates every non-empty stack to the size of the smallest, keeping the
/// most confident rows, and averages. Empty stacks are left out.
pub fn equalize_and_msc<T: Scalar>(stacks: &[SaliencyStack<T>]) -> Result<(MeanSaliencyContour<T>, Vec<SaliencyStack<T>>)> {
    let live: Vec<&SaliencyStack<T>> = stacks.iter().filter(|s| !s.is_empty()).collect();
    let first = live.first().ok_or(Error::Empty("saliency stacks"))?;
    let class_id = first.class_id;
    let bins = first.bins().unwrap_or(0);
    for s in &live {
        if s.class_id != class_id {
            return Err(Error::InvalidArgument("stacks mix classes".into()));
        }
        if s.rows.iter().any(|r| r.values.len() != bins) {
            return Err(Error::LengthMismatch { what: "saliency bins", left: s.bins().unwrap_or(0), right: bins });
        }
    }
    let m = live.iter().map(|s| s.len()).min().unwrap_or(0);
    let kept: Vec<SaliencyStack<T>> = live.iter().map(|s| s.truncated(m)).collect();
    let inv_m = T::one() / T::of_usize(m);
    let per_dataset: Vec<Vec<T>> = kept
        .iter()
        .map(|s| {
            let mut acc = vec![T::zero(); bins];
            for r in &s.rows {
                for (a, &v) in acc.iter_mut().zip(&r.values) {
                    *a += v;
                }
            }
            acc.into_iter().map(|v| v * inv_m).collect()
        })
        .collect();
    let inv_d = T::one() / T::of_usize(per_dataset.len());
    let msc = (0..bins).map(|b| per_dataset.iter().map(|d| d[b]).sum::<T>() * inv_d).collect();
    Ok((
        MeanSaliencyContour {
            class_id,
            datasets: kept.iter().map(|s| s.dataset_id.clone()).collect(),
            per_dataset,
            msc,
            rows_kept: m,
        },
        kept,
    ))
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::coords::{Direction, InterauralPolar};
    use crate::dsp::{AxisSpec, HrtfSample};

    pub fn sample(seed: u64, bins: usize, lateral: f64, polar: f64, dataset: &str, subject: &str) -> HrtfSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HrtfSample {
            ipsi: (0..bins).map(|_| rng.random_range(0.0..2.0)).collect(),
            contra: (0..bins).map(|_| rng.random_range(0.0..1.0)).collect(),
            freq_axis: Arc::new(AxisSpec::linear(2 * (bins - 1), 44_100.0)),
            direction: Direction::from_interaural(InterauralPolar::new(lateral, polar).unwrap(), None),
            subject_id: subject.into(),
            dataset_id: dataset.into(),
            direction_index: seed as usize,
            preproc: String::new(),
        }
    }
}

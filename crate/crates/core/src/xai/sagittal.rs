use std::collections::BTreeMap;

use crate::dsp::HrtfSample;
use crate::error::{Error, Result};
use crate::model::CnnModel;
use crate::scalar::Scalar;

use super::{explain_all, SaliencyMap};

/// Largest |lateral angle| counted as on the median plane.
pub const SAGITTAL_TOLERANCE_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SagittalRow<T> {
    pub polar_deg: f64,
    pub ipsi: Vec<T>,
    pub contra: Vec<T>,
    /// Saliency for the predicted class.
    pub saliency: SaliencyMap<T>,
}

fn on_plane<T>(s: &HrtfSample<T>, tol: f64) -> bool {
    s.direction.interaural.lateral_deg.abs() <= tol
}

/// Median-plane samples of one subject ordered by polar angle, each with the
/// saliency of its predicted class.
pub fn sagittal_map<T: Scalar>(samples: &[HrtfSample<T>], model: &CnnModel<T>, tol_deg: f64) -> Result<Vec<SagittalRow<T>>> {
    let mut plane: Vec<&HrtfSample<T>> = samples.iter().filter(|s| on_plane(s, tol_deg)).collect();
    if plane.is_empty() {
        return Err(Error::Empty("sagittal samples"));
    }
    plane.sort_by(|a, b| {
        a.direction
            .interaural
            .polar_deg
            .total_cmp(&b.direction.interaural.polar_deg)
            .then(a.direction_index.cmp(&b.direction_index))
    });
    let maps = explain_all(model, &plane, None)?;
    Ok(plane
        .into_iter()
        .zip(maps)
        .map(|(s, saliency)| SagittalRow {
            polar_deg: s.direction.interaural.polar_deg,
            ipsi: s.ipsi.clone(),
            contra: s.contra.clone(),
            saliency,
        })
        .collect())
}

/// Subjects ranked by mean prediction confidence over their median-plane
/// samples, highest first; ties by subject id.
pub fn rank_subjects<T: Scalar>(samples: &[HrtfSample<T>], model: &CnnModel<T>, tol_deg: f64) -> Result<Vec<(String, f64)>> {
    let plane: Vec<&HrtfSample<T>> = samples.iter().filter(|s| on_plane(s, tol_deg)).collect();
    let maps = explain_all(model, &plane, None)?;
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (s, m) in plane.iter().zip(&maps) {
        let e = acc.entry(&s.subject_id).or_default();
        e.0 += m.confidence.f64();
        e.1 += 1;
    }
    let mut out: Vec<(String, f64)> = acc.into_iter().map(|(k, (sum, n))| (k.to_string(), sum / n as f64)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

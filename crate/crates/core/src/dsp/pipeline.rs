use std::sync::Arc;

use crate::coords::ipsi_contra_swap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{
    aee_normalize, amplitude_scale, apply_filterbank, band_cut, build_erb_filterbank,
    mel_warp_indices, resample, AeeReport, AxisSpec, ErbFilterbank, FrequencyAxis, HrtfSample,
    Hrir, MagnitudeSpectrum, Normalization, PreprocConfig,
};

/// One subject's preprocessed samples.
#[derive(Debug, Clone)]
pub struct Preprocessed<T> {
    pub samples: Vec<HrtfSample<T>>,
    pub aee: Option<AeeReport>,
}

enum AxisTransform<T> {
    Identity,
    Mel(Vec<usize>),
    Erb(ErbFilterbank<T>),
}

struct Pipeline<T: Scalar> {
    cfg: PreprocConfig,
    fingerprint: String,
    analyzer: MagnitudeSpectrum<T>,
    linear_axis: AxisSpec,
    output_axis: Arc<AxisSpec>,
    transform: AxisTransform<T>,
}

impl<T: Scalar> Pipeline<T> {
    fn new(cfg: &PreprocConfig) -> Result<Self> {
        cfg.validate()?;
        let linear_axis = AxisSpec::linear(cfg.fft_size, cfg.target_rate_hz);
        let (transform, output_axis) = match cfg.freq_axis {
            FrequencyAxis::Linear => (AxisTransform::Identity, linear_axis.clone()),
            FrequencyAxis::Mel => {
                let idx = mel_warp_indices(&linear_axis)?;
                let axis = AxisSpec {
                    kind: super::AxisKind::Mel,
                    bin_center_hz: idx.iter().map(|&i| linear_axis.bin_center_hz[i]).collect(),
                };
                (AxisTransform::Mel(idx), axis)
            }
            FrequencyAxis::Erb => {
                let fb = build_erb_filterbank(
                    cfg.erb_filters,
                    cfg.erb_low_hz,
                    cfg.erb_high_hz,
                    &linear_axis,
                )?;
                let axis = fb.axis();
                (AxisTransform::Erb(fb), axis)
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            fingerprint: cfg.fingerprint(),
            analyzer: MagnitudeSpectrum::new(cfg.fft_size)?,
            linear_axis,
            output_axis: Arc::new(output_axis),
            transform,
        })
    }

    fn run(&self, hrirs: &[Hrir<T>]) -> Result<Preprocessed<T>> {
        if hrirs.is_empty() {
            return Err(Error::Empty("subject HRIRs"));
        }
        let linear = Arc::new(self.linear_axis.clone());
        let mut samples = Vec::with_capacity(hrirs.len());
        for (index, h) in hrirs.iter().enumerate() {
            let h = if h.sample_rate_hz == self.cfg.target_rate_hz {
                h.validate()?;
                h.clone()
            } else {
                resample(h, self.cfg.target_rate_hz)?
            };
            let left = self.analyzer.magnitude(&h.left);
            let right = self.analyzer.magnitude(&h.right);
            let (mut ipsi, mut contra) =
                ipsi_contra_swap(&left, &right, h.direction.interaural.lateral_deg)?;
            if let Some((lo, hi)) = self.cfg.band_cut_hz {
                ipsi = band_cut(&ipsi, &self.linear_axis, lo, hi)?;
                contra = band_cut(&contra, &self.linear_axis, lo, hi)?;
            }
            samples.push(HrtfSample {
                ipsi,
                contra,
                freq_axis: Arc::clone(&linear),
                direction: h.direction,
                subject_id: h.subject_id.clone(),
                dataset_id: h.dataset_id.clone(),
                direction_index: index,
                preproc: self.fingerprint.clone(),
            });
        }

        let aee = match self.cfg.normalization {
            Normalization::None => None,
            Normalization::Aee => Some(aee_normalize(&mut samples)?),
        };

        for s in samples.iter_mut() {
            let (ipsi, contra) = match &self.transform {
                AxisTransform::Identity => (std::mem::take(&mut s.ipsi), std::mem::take(&mut s.contra)),
                AxisTransform::Mel(idx) => (
                    idx.iter().map(|&i| s.ipsi[i]).collect(),
                    idx.iter().map(|&i| s.contra[i]).collect(),
                ),
                AxisTransform::Erb(fb) => (apply_filterbank(&s.ipsi, fb)?, apply_filterbank(&s.contra, fb)?),
            };
            s.ipsi = amplitude_scale(&ipsi, self.cfg.amplitude_scale);
            s.contra = amplitude_scale(&contra, self.cfg.amplitude_scale);
            s.freq_axis = Arc::clone(&self.output_axis);
        }
        Ok(Preprocessed { samples, aee })
    }
}

/// Runs the full chain on one subject: resample, FFT magnitude, ipsi/contra
/// ordering, band cut, equator-energy normalization, frequency-axis
/// transform and amplitude scaling, in that order.
pub fn preprocess_subject<T: Scalar>(hrirs: &[Hrir<T>], cfg: &PreprocConfig) -> Result<Preprocessed<T>> {
    Pipeline::new(cfg)?.run(hrirs)
}

/// Preprocesses several subjects with one shared configuration.
pub fn preprocess<T: Scalar>(subjects: &[Vec<Hrir<T>>], cfg: &PreprocConfig) -> Result<Vec<Preprocessed<T>>> {
    let pipeline = Pipeline::new(cfg)?;
    subjects.iter().map(|s| pipeline.run(s)).collect()
}

//! Synthetic HRIR sets with planted elevation cues.
//!
//! Every direction gets a smooth log-magnitude template: a notch whose centre
//! rises with polar angle, a 13 kHz peak on front sectors, a one-octave cut
//! around 4 kHz on rear sectors and a 6 kHz head-shadow band (cut on the far
//! ear, half as much boost on the near ear) that grows with lateral angle. Every cue is band-limited and listed in the
//! ground truth, so nothing separates the classes outside the recorded cue
//! bands. All cue gains scale
//! with the notch depth, so a zero-depth spec yields featureless spectra.
//! Templates become linear-phase impulse responses in HRD1-compatible records
//! together with the list of planted cues.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coords::{classify, ElevationClass, InterauralPolar, VerticalPolar};
use crate::dataset::{class_balance, DirectionEntry, SubjectRecord};
use crate::dsp::AxisSpec;
use crate::error::{Error, Result};
use crate::kv::{self, KvMap};
use crate::scalar::Scalar;

/// Half-width of the scoring window around each planted cue.
pub const CUE_WINDOW_OCT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub dataset_id: String,
    pub sample_rate_hz: f64,
    pub ir_length: usize,
    /// Grid spacing; the first row sits half a step inside the range.
    pub lateral_step_deg: f64,
    pub polar_step_deg: f64,
    /// The notch centre moves linearly through these two anchors.
    pub notch_anchor_lo: (f64, f64),
    pub notch_anchor_hi: (f64, f64),
    pub notch_depth_db: f64,
    pub notch_width_oct: f64,
    pub front_peak_hz: f64,
    pub rear_cut_hz: f64,
    pub shadow_hz: f64,
    /// Per-subject relative scatter of notch centres.
    pub subject_jitter: f64,
    /// Per-subject broadband gain drawn from `±subject_gain_db`.
    pub subject_gain_db: f64,
    /// Level of uniform magnitude noise relative to unit gain.
    pub noise_floor_db: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 40,
            dataset_id: "synth".into(),
            sample_rate_hz: 48_000.0,
            ir_length: 256,
            lateral_step_deg: 30.0,
            polar_step_deg: 30.0,
            notch_anchor_lo: (-20.0, 5_000.0),
            notch_anchor_hi: (70.0, 11_000.0),
            notch_depth_db: 20.0,
            notch_width_oct: 1.0,
            front_peak_hz: 13_000.0,
            rear_cut_hz: 4_000.0,
            shadow_hz: 6_000.0,
            subject_jitter: 0.05,
            subject_gain_db: 6.0,
            noise_floor_db: Some(-40.0),
        }
    }
}

fn pair(v: (f64, f64)) -> String {
    format!("{},{}", v.0, v.1)
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("{key} = {v:?}: expected polar_deg,hz"));
    let (a, b) = v.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl SynthSpec {
    /// Zero-depth copy used as the negative control.
    pub fn negative_control(&self) -> Self {
        Self { notch_depth_db: 0.0, ..self.clone() }
    }

    pub fn is_negative_control(&self) -> bool {
        self.notch_depth_db == 0.0
    }

    pub fn to_kv(&self) -> String {
        kv::render(&[
            ("n_subjects", self.n_subjects.to_string()),
            ("dataset_id", self.dataset_id.clone()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("ir_length", self.ir_length.to_string()),
            ("lateral_step_deg", self.lateral_step_deg.to_string()),
            ("polar_step_deg", self.polar_step_deg.to_string()),
            ("notch_anchor_lo", pair(self.notch_anchor_lo)),
            ("notch_anchor_hi", pair(self.notch_anchor_hi)),
            ("notch_depth_db", self.notch_depth_db.to_string()),
            ("notch_width_oct", self.notch_width_oct.to_string()),
            ("front_peak_hz", self.front_peak_hz.to_string()),
            ("rear_cut_hz", self.rear_cut_hz.to_string()),
            ("shadow_hz", self.shadow_hz.to_string()),
            ("subject_jitter", self.subject_jitter.to_string()),
            ("subject_gain_db", self.subject_gain_db.to_string()),
            ("noise_floor_db", self.noise_floor_db.map_or("none".into(), |v| v.to_string())),
        ])
    }

    /// Parses a key-value spec; missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut s = Self::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.take(stringify!($field))? { s.$field = v; })*
            };
        }
        set!(
            n_subjects,
            dataset_id,
            sample_rate_hz,
            ir_length,
            lateral_step_deg,
            polar_step_deg,
            notch_depth_db,
            notch_width_oct,
            front_peak_hz,
            rear_cut_hz,
            shadow_hz,
            subject_jitter,
            subject_gain_db
        );
        for key in ["notch_anchor_lo", "notch_anchor_hi"] {
            if let Some(v) = kv.take_str(key) {
                let p = parse_pair(key, &v)?;
                if key.ends_with("lo") {
                    s.notch_anchor_lo = p;
                } else {
                    s.notch_anchor_hi = p;
                }
            }
        }
        if let Some(v) = kv.take_str("noise_floor_db") {
            s.noise_floor_db = if v.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(v.parse().map_err(|e| Error::Config(format!("noise_floor_db = {v:?}: {e}")))?)
            };
        }
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 {
            return cfg("n_subjects must be at least 1".into());
        }
        if !(self.sample_rate_hz > 0.0) || self.ir_length < 16 || self.ir_length % 2 != 0 {
            return cfg("need a positive sample rate and an even ir_length >= 16".into());
        }
        for (k, v) in [("lateral_step_deg", self.lateral_step_deg), ("polar_step_deg", self.polar_step_deg)] {
            if !(v > 0.0 && v <= 180.0) {
                return cfg(format!("{k} must lie in (0, 180]"));
            }
        }
        if self.notch_anchor_lo.0 == self.notch_anchor_hi.0 {
            return cfg("notch anchors need distinct polar angles".into());
        }
        if !(self.notch_depth_db >= 0.0 && self.notch_width_oct > 0.0) {
            return cfg("notch depth must be >= 0 and width > 0".into());
        }
        if !(0.0..1.0).contains(&self.subject_jitter) || self.subject_gain_db < 0.0 {
            return cfg("subject_jitter must lie in [0, 1) and subject_gain_db be >= 0".into());
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for (k, v) in [
            ("front_peak_hz", self.front_peak_hz),
            ("rear_cut_hz", self.rear_cut_hz),
            ("shadow_hz", self.shadow_hz),
        ] {
            if !(v > 0.0 && v < nyquist) {
                return cfg(format!("{k} = {v} outside (0, {nyquist})"));
            }
        }
        for d in self.grid()? {
            let p = d.interaural.polar_deg;
            let hi = self.notch_center_hz(p) * (1.0 + self.subject_jitter);
            let lo = self.notch_center_hz(p) * (1.0 - self.subject_jitter);
            if !(lo > 0.0 && hi < nyquist) {
                return cfg(format!("notch centre at polar {p} leaves (0, {nyquist}) Hz"));
            }
        }
        Ok(())
    }

    /// Measurement grid in interaural coordinates with sector labels.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let mut out = vec![];
        let mut lat = -90.0 + self.lateral_step_deg / 2.0;
        while lat < 90.0 {
            let mut pol = -90.0 + self.polar_step_deg / 2.0;
            while pol < 270.0 {
                let interaural = InterauralPolar::new(lat, pol)?;
                out.push(GridPoint { interaural, class: classify(interaural) });
                pol += self.polar_step_deg;
            }
            lat += self.lateral_step_deg;
        }
        let counts = class_balance(out.iter().map(|g| g.class));
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!(
                "grid has no direction in sector {}",
                ElevationClass::ALL[missing]
            )));
        }
        Ok(out)
    }

    /// Notch centre for a polar angle, before subject jitter. Rear angles use
    /// their mirror image about the vertical plane through the ears.
    pub fn notch_center_hz(&self, polar_deg: f64) -> f64 {
        let p = if polar_deg > 90.0 { 180.0 - polar_deg } else { polar_deg };
        let (p0, f0) = self.notch_anchor_lo;
        let (p1, f1) = self.notch_anchor_hi;
        f0 + (p - p0) * (f1 - f0) / (p1 - p0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub interaural: InterauralPolar,
    pub class: ElevationClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueKind {
    Notch,
    Peak,
    /// Rear-sector cut.
    Rear,
    /// Far-ear head shadow.
    Shadow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub kind: CueKind,
    pub center_hz: f64,
    pub width_oct: f64,
}

/// Cues planted in one generated direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueRecord {
    pub subject_id: String,
    pub direction_index: usize,
    pub cues: Vec<Cue>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CueGroundTruth {
    records: Vec<CueRecord>,
    index: BTreeMap<(String, usize), usize>,
}

impl CueGroundTruth {
    pub fn new(records: Vec<CueRecord>) -> Self {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.subject_id.clone(), r.direction_index), i))
            .collect();
        Self { records, index }
    }

    pub fn records(&self) -> &[CueRecord] {
        &self.records
    }

    pub fn get(&self, subject_id: &str, direction_index: usize) -> Option<&CueRecord> {
        self.index
            .get(&(subject_id.to_string(), direction_index))
            .map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// CSV with one row per generated direction. A direction with several cues
/// lists their centres and widths separated by `;`.
pub fn write_ground_truth_csv<W: Write>(truth: &CueGroundTruth, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["subject", "direction_index", "cue_center_hz", "width_oct"])?;
    for r in truth.records() {
        let join = |f: fn(&Cue) -> f64| r.cues.iter().map(|c| f(c).to_string()).collect::<Vec<_>>().join(";");
        out.write_record([
            r.subject_id.clone(),
            r.direction_index.to_string(),
            join(|c| c.center_hz),
            join(|c| c.width_oct),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_ground_truth_csv`]. Cue kinds are not
/// stored; every cue reads back as a notch.
pub fn read_ground_truth_csv(path: impl AsRef<Path>) -> Result<CueGroundTruth> {
    let path = path.as_ref();
    let run = || -> Result<CueGroundTruth> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut records = vec![];
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).ok_or_else(|| Error::Format(format!("row has no column {i}")));
            let floats = |s: &str| -> Result<Vec<f64>> {
                s.split(';')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("{t:?}: {e}"))))
                    .collect()
            };
            let centers = floats(field(2)?)?;
            let widths = floats(field(3)?)?;
            if centers.len() != widths.len() {
                return Err(Error::LengthMismatch { what: "cue columns", left: centers.len(), right: widths.len() });
            }
            records.push(CueRecord {
                subject_id: field(0)?.to_string(),
                direction_index: field(1)?
                    .parse()
                    .map_err(|e| Error::Format(format!("direction_index: {e}")))?,
                cues: centers
                    .into_iter()
                    .zip(widths)
                    .map(|(center_hz, width_oct)| Cue { kind: CueKind::Notch, center_hz, width_oct })
                    .collect(),
            });
        }
        Ok(CueGroundTruth::new(records))
    };
    run().map_err(|e| e.at(path))
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub subjects: Vec<SubjectRecord>,
    pub truth: CueGroundTruth,
    pub negative_control: bool,
}

/// Gaussian bump in log frequency with the given full width at half maximum.
fn log_gauss(f: f64, center: f64, fwhm_oct: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let x = (f / center).log2() / fwhm_oct;
    (-4.0 * std::f64::consts::LN_2 * x * x).exp()
}

#[derive(Debug, Clone, Copy)]
struct SubjectDraw {
    jitter: f64,
    gain_db: f64,
}

impl SynthSpec {
    /// Noise-free magnitude template in dB at frequency `f`.
    fn template_db(&self, subj: SubjectDraw, g: &GridPoint, far_ear: bool, f: f64) -> (f64, Vec<Cue>) {
        use ElevationClass::*;
        let depth = self.notch_depth_db;
        let notch = self.notch_center_hz(g.interaural.polar_deg) * subj.jitter;
        let mut db = subj.gain_db - depth * log_gauss(f, notch, self.notch_width_oct);
        let mut cues = vec![Cue { kind: CueKind::Notch, center_hz: notch, width_oct: self.notch_width_oct }];
        match g.class {
            FrontDown | FrontLevel | FrontUp => {
                db += 0.5 * depth * log_gauss(f, self.front_peak_hz, self.notch_width_oct);
                cues.push(Cue { kind: CueKind::Peak, center_hz: self.front_peak_hz, width_oct: self.notch_width_oct });
            }
            BackUp | BackLevel | BackDown => {
                db -= 0.5 * depth * log_gauss(f, self.rear_cut_hz, self.notch_width_oct);
                cues.push(Cue { kind: CueKind::Rear, center_hz: self.rear_cut_hz, width_oct: self.notch_width_oct });
            }
            _ => {}
        }
        let shadow = depth * g.interaural.lateral_deg.abs() / 60.0;
        let band = log_gauss(f, self.shadow_hz, self.notch_width_oct);
        db += if far_ear { -shadow * band } else { 0.5 * shadow * band };
        if g.interaural.lateral_deg != 0.0 {
            cues.push(Cue { kind: CueKind::Shadow, center_hz: self.shadow_hz, width_oct: self.notch_width_oct });
        }
        (db, cues)
    }

    /// Magnitudes on the `ir_length`-point FFT grid, without noise.
    pub fn template(&self, jitter: f64, gain_db: f64, g: &GridPoint, far_ear: bool) -> Vec<f64> {
        let n = self.ir_length;
        let df = self.sample_rate_hz / n as f64;
        (0..=n / 2)
            .map(|k| {
                let (db, _) = self.template_db(SubjectDraw { jitter, gain_db }, g, far_ear, k as f64 * df);
                10f64.powf(db / 20.0)
            })
            .collect()
    }
}

/// Real, symmetric impulse response of length `2 * (mag.len() - 1)` whose
/// DFT magnitude equals `mag`.
pub fn linear_phase_ir(mag: &[f64]) -> Vec<f64> {
    let n = 2 * (mag.len() - 1);
    let mut spec: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k } else { n - k };
            let sign = if kk % 2 == 0 { 1.0 } else { -1.0 };
            Complex::new(sign * mag[kk], 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Generates `spec.n_subjects` subjects with planted cues.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    spec.validate()?;
    let grid = spec.grid()?;
    let directions: Vec<DirectionEntry> = grid
        .iter()
        .map(|g| {
            let v: VerticalPolar = crate::coords::interaural_to_vertical(g.interaural);
            DirectionEntry { azimuth_deg: v.azimuth_deg, elevation_deg: v.elevation_deg, distance_m: None }
        })
        .collect();
    let n = spec.ir_length;
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    let mut records = vec![];
    for s in 0..spec.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        let draw = SubjectDraw {
            jitter: 1.0 + spec.subject_jitter * rng.random_range(-1.0..=1.0),
            gain_db: spec.subject_gain_db * rng.random_range(-1.0..=1.0),
        };
        let subject_id = format!("{}_{:03}", spec.dataset_id, s + 1);
        let mut irs = Vec::with_capacity(grid.len() * 2 * n);
        for (d, g) in grid.iter().enumerate() {
            // Positive lateral angles lie to the right, shadowing the left ear.
            let left_far = g.interaural.lateral_deg > 0.0;
            for far in [left_far, !left_far] {
                let mut mag = spec.template(draw.jitter, draw.gain_db, g, far);
                if let Some(nf) = spec.noise_floor_db {
                    let amp = 10f64.powf(nf / 20.0);
                    for m in &mut mag {
                        *m += amp * rng.random::<f64>();
                    }
                }
                irs.extend(linear_phase_ir(&mag).into_iter().map(|v| v as f32));
            }
            let (_, cues) = spec.template_db(draw, g, false, 1.0);
            records.push(CueRecord { subject_id: subject_id.clone(), direction_index: d, cues });
        }
        subjects.push(SubjectRecord {
            subject_id,
            dataset_id: spec.dataset_id.clone(),
            sample_rate_hz: spec.sample_rate_hz,
            directions: directions.clone(),
            n_samples: n,
            irs,
        });
    }
    Ok(SynthOutput {
        subjects,
        truth: CueGroundTruth::new(records),
        negative_control: spec.is_negative_control(),
    })
}

fn in_window(f: f64, cues: &[Cue]) -> bool {
    f > 0.0 && cues.iter().any(|c| (f / c.center_hz).log2().abs() <= CUE_WINDOW_OCT)
}

/// Share of saliency mass within `CUE_WINDOW_OCT` octaves of any cue.
/// Returns `None` when the saliency has no mass.
pub fn saliency_localization_score<T: Scalar>(saliency: &[T], cues: &[Cue], axis: &AxisSpec) -> Result<Option<f64>> {
    if saliency.len() != axis.len() {
        return Err(Error::LengthMismatch { what: "saliency/axis", left: saliency.len(), right: axis.len() });
    }
    let (mut inside, mut total) = (0.0, 0.0);
    for (s, &f) in saliency.iter().zip(&axis.bin_center_hz) {
        let s = s.f64().max(0.0);
        total += s;
        if in_window(f, cues) {
            inside += s;
        }
    }
    Ok((total > 0.0).then(|| inside / total))
}

/// Score of a uniform saliency: the fraction of axis bins inside a cue window.
pub fn uniform_baseline_score(cues: &[Cue], axis: &AxisSpec) -> f64 {
    let inside = axis.bin_center_hz.iter().filter(|&&f| in_window(f, cues)).count();
    inside as f64 / axis.len() as f64
}

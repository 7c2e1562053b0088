//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a gating criterion fails.
//!
//! Run alone with `cargo test -p hrtfxai --test acceptance`. The synthetic
//! end-to-end criterion trains two models and takes several minutes.

use std::collections::HashMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrtfxai::coords::{
    classify, interaural_to_vertical, vertical_to_interaural, ElevationClass, InterauralPolar, VerticalPolar,
};
use hrtfxai::dataset::{read_hrtf_set, split_subjects, SplitSpec};
use hrtfxai::dsp::{
    aee_normalize, apply_filterbank, build_erb_filterbank, equator_energy, erb_rate, preprocess_subject, AxisSpec,
    HrtfSample, PreprocConfig, Preset,
};
use hrtfxai::eval::{metrics, CrossMatrix};
use hrtfxai::model::{predict_set, train, write_model_to, CnnModel, LabeledSet, TrainConfig, N_CLASSES};
use hrtfxai::synth::{generate, saliency_localization_score, uniform_baseline_score, SynthSpec};
use hrtfxai::xai::{cam, explain_all};
use hrtfxai::Direction;

const PARAM_COUNTS: [usize; 5] = [2112, 32800, 8224, 4112, 153];
const PARAM_TOTAL: usize = 47401;

const GRAD_SEEDS: u64 = 20;
const GRAD_STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so gradients that are zero up
/// to rounding do not divide by zero.
const GRAD_FLOOR: f64 = 1e-7;
const GRAD_PARAMS_PER_BLOCK: usize = 12;
/// A probe whose one-sided differences disagree by more than this share
/// crossed a ReLU or max-pool switch inside [-h, h]; it is redrawn.
const GRAD_KINK: f64 = 1e-3;
/// Redraws are expected on wide inputs with many near-zero ReLU units.
const GRAD_KINK_SHARE_MAX: f64 = 0.05;

const CAM_INPUTS: usize = 100;
const CAM_TOL: f64 = 1e-9;

const ROUND_TRIP_TOL_DEG: f64 = 1e-9;

const SYNTH_SEED: u64 = 7;
const SYNTH_F1_MIN: f64 = 0.90;
const SYNTH_MAX_EPOCHS: usize = 200;
const SYNTH_WALL_CLOCK: Duration = Duration::from_secs(15 * 60);
const NEGATIVE_F1_MAX: f64 = 0.25;
const SALIENCY_MIN: f64 = 0.5;
const BASELINE_MAX: f64 = 0.15;

const AEE_SUBJECTS: u64 = 50;
const AEE_TOL: f64 = 1e-9;

const ERB_FILTERS: usize = 255;
const ERB_LOW_HZ: f64 = 50.0;
const ERB_HIGH_HZ: f64 = 22_050.0;
const ERB_TOL: f64 = 1e-9;
const ERB_COVERAGE_MAX: f64 = 10.0;

const CIPIC_F1_MIN: f64 = 0.60;

struct Line {
    name: &'static str,
    pass: Option<bool>,
    gating: bool,
    detail: String,
    elapsed: Duration,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn record(&mut self, name: &'static str, gating: bool, run: impl FnOnce() -> (Option<bool>, String)) {
        let t = Instant::now();
        let (pass, detail) = run();
        let line = Line { name, pass, gating, detail, elapsed: t.elapsed() };
        let tag = match (line.pass, line.gating) {
            (Some(true), _) => "PASS",
            (Some(false), true) => "FAIL",
            (Some(false), false) => "FAIL (non-gating)",
            (None, _) => "SKIP",
        };
        println!("[{tag}] {} ({:.1} s): {}", line.name, line.elapsed.as_secs_f64(), line.detail);
        self.lines.push(line);
    }

    fn failed(&self) -> usize {
        self.lines.iter().filter(|l| l.gating && l.pass == Some(false)).count()
    }
}

fn random_input(rng: &mut ChaCha8Rng, bins: usize) -> Vec<f64> {
    (0..2 * bins).map(|_| rng.random_range(0.0..2.0)).collect()
}

fn param_counts() -> (Option<bool>, String) {
    let t = Instant::now();
    let counts = CnnModel::<f64>::new(0).param_counts();
    let total: usize = counts.iter().sum();
    let fast = t.elapsed() < Duration::from_secs(1);
    (Some(counts == PARAM_COUNTS && total == PARAM_TOTAL && fast), format!("per layer {counts:?}, total {total}"))
}

fn gradient_check() -> (Option<bool>, String) {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let (mut probes, mut kinks) = (0usize, 0usize);
    for seed in 0..GRAD_SEEDS {
        for bins in [32usize, 257] {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let model = CnnModel::<f64>::new(seed);
            let x = random_input(&mut rng, bins);
            let label = rng.random_range(0..N_CLASSES);
            let (l0, g) = model.gradient(&[&x], &[label], bins).unwrap();
            for block in hrtfxai::model::param_blocks() {
                let mut taken = 0;
                while taken < GRAD_PARAMS_PER_BLOCK {
                    let i = rng.random_range(block.weight.start..block.bias.end);
                    let mut p = model.clone();
                    p.params_mut()[i] += GRAD_STEP;
                    let up = p.loss(&[&x], &[label], bins).unwrap();
                    p.params_mut()[i] -= 2.0 * GRAD_STEP;
                    let down = p.loss(&[&x], &[label], bins).unwrap();
                    probes += 1;
                    let (fwd, bwd) = ((up - l0) / GRAD_STEP, (l0 - down) / GRAD_STEP);
                    if (fwd - bwd).abs() > GRAD_KINK * fwd.abs().max(bwd.abs()).max(GRAD_FLOOR) {
                        kinks += 1;
                        continue;
                    }
                    taken += 1;
                    let fd = (up - down) / (2.0 * GRAD_STEP);
                    let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(GRAD_FLOOR);
                    if err > worst.0 {
                        worst = (err, format!("seed {seed}, 2x{bins}, {} param {i}", block.name));
                    }
                }
            }
        }
    }
    let fast = t.elapsed() < Duration::from_secs(120);
    let kink_share = kinks as f64 / probes as f64;
    (
        Some(worst.0 < GRAD_TOL && kink_share <= GRAD_KINK_SHARE_MAX && fast),
        format!(
            "max relative error {:.2e} at {} (tol {GRAD_TOL:e}); {kinks}/{probes} probes straddled a kink and were redrawn",
            worst.0, worst.1
        ),
    )
}

fn cam_completeness() -> (Option<bool>, String) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for i in 0..CAM_INPUTS {
        let bins = if i % 2 == 0 { 257 } else { rng.random_range(16..320) };
        let model = CnnModel::<f64>::new(i as u64);
        let x = random_input(&mut rng, bins);
        let trace = model.forward(&x).unwrap();
        for c in 0..N_CLASSES {
            let m = cam(&trace, &model, c).unwrap();
            let mean = m.iter().sum::<f64>() / m.len() as f64;
            worst = worst.max((mean + model.class_bias(c).unwrap() - trace.logits[c]).abs());
        }
    }
    let fast = t.elapsed() < Duration::from_secs(10);
    (Some(worst < CAM_TOL && fast), format!("max |mean CAM + b - logit| = {worst:.2e} over {CAM_INPUTS} inputs x 9 classes"))
}

/// Sector from a unit vector, written independently of `classify`.
fn oracle_sector(az_deg: f64, el_deg: f64) -> ElevationClass {
    use ElevationClass::*;
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    let (x, y, z) = (el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let lateral = (-y).asin().to_degrees();
    let mut polar = snap(z.atan2(x).to_degrees());
    if polar < -90.0 {
        polar += 360.0;
    }
    let lateral = snap(lateral);
    if lateral.abs() > 60.0 {
        // Upper half: polar in [0, 180).
        return if z > 0.0 || (z == 0.0 && x >= 0.0) { LateralUp } else { LateralDown };
    }
    let table = [
        (-90.0, -20.0, FrontDown),
        (-20.0, 20.0, FrontLevel),
        (20.0, 70.0, FrontUp),
        (70.0, 110.0, Up),
        (110.0, 160.0, BackUp),
        (160.0, 200.0, BackLevel),
        (200.0, 270.0, BackDown),
    ];
    if polar == -90.0 {
        return BackDown;
    }
    table.iter().find(|(lo, hi, _)| polar > *lo && polar <= *hi).map(|t| t.2).expect("polar in range")
}

/// Integer grid points land exactly on sector edges; drop the trig rounding.
fn snap(deg: f64) -> f64 {
    if (deg - deg.round()).abs() < 1e-9 {
        deg.round()
    } else {
        deg
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn coordinate_oracle() -> (Option<bool>, String) {
    let t = Instant::now();
    let (mut points, mut agree) = (0usize, 0usize);
    let mut first_miss = None;
    let mut worst_rt = 0.0f64;
    for el in -90i32..=90 {
        for az in -180..180 {
            let v = VerticalPolar::new(az as f64, el as f64).unwrap();
            let got = classify(vertical_to_interaural(v));
            let want = oracle_sector(az as f64, el as f64);
            points += 1;
            if got == want {
                agree += 1;
            } else if first_miss.is_none() {
                first_miss = Some((az, el, got, want));
            }
            // Off-pole: azimuth is undefined at |el| = 90 and polar at |lateral| = 90.
            let i = vertical_to_interaural(v);
            if el.abs() < 90 && i.lateral_deg.abs() < 90.0 - 1e-6 {
                let back = interaural_to_vertical(i);
                worst_rt = worst_rt
                    .max(angle_diff(back.azimuth_deg, v.azimuth_deg))
                    .max((back.elevation_deg - v.elevation_deg).abs());
            }
        }
    }
    for lat in -89..=89 {
        for pol in -90..270 {
            let i = InterauralPolar::new(lat as f64, pol as f64).unwrap();
            let v = interaural_to_vertical(i);
            if v.elevation_deg.abs() < 90.0 - 1e-6 {
                let back = vertical_to_interaural(v);
                worst_rt = worst_rt
                    .max(angle_diff(back.polar_deg, i.polar_deg))
                    .max((back.lateral_deg - i.lateral_deg).abs());
            }
        }
    }
    let fast = t.elapsed() < Duration::from_secs(30);
    let miss = first_miss.map_or(String::new(), |m| format!(", first disagreement {m:?}"));
    (
        Some(agree == points && worst_rt < ROUND_TRIP_TOL_DEG && fast),
        format!("{agree}/{points} grid points agree, max round-trip error {worst_rt:.2e} deg{miss}"),
    )
}

struct SynthRun {
    macro_f1: f64,
    epochs: usize,
    elapsed: Duration,
    model: CnnModel<f32>,
    test: Vec<HrtfSample<f64>>,
    truth: hrtfxai::synth::CueGroundTruth,
}

/// Generate, split 32/4/4, preprocess with the Optimized preset, train and
/// score the held-out subjects.
fn synth_run(spec: &SynthSpec) -> Result<SynthRun, String> {
    let t = Instant::now();
    let out = generate(spec, SYNTH_SEED).map_err(|e| e.to_string())?;
    let ids: Vec<String> = out.subjects.iter().map(|s| s.subject_id.clone()).collect();
    let split = split_subjects(&ids, &SplitSpec { seed: SYNTH_SEED, ..Default::default() }).map_err(|e| e.to_string())?;
    if (split.train.len(), split.val.len(), split.test.len()) != (32, 4, 4) {
        return Err(format!("split {}/{}/{}", split.train.len(), split.val.len(), split.test.len()));
    }
    let cfg = PreprocConfig::preset(Preset::Optimized);
    let mut by_subject: HashMap<String, Vec<HrtfSample<f64>>> = HashMap::new();
    for s in &out.subjects {
        let hrirs = s.to_hrirs::<f64>().map_err(|e| e.to_string())?;
        by_subject.insert(s.subject_id.clone(), preprocess_subject(&hrirs, &cfg).map_err(|e| e.to_string())?.samples);
    }
    let gather = |v: &[String]| v.iter().flat_map(|i| by_subject[i].clone()).collect::<Vec<_>>();
    let to_set = |v: &[HrtfSample<f64>]| LabeledSet::from_samples(v).map(|s| s.cast::<f32>());
    let train_set = to_set(&gather(&split.train)).map_err(|e| e.to_string())?;
    let val_set = to_set(&gather(&split.val)).map_err(|e| e.to_string())?;
    let test = gather(&split.test);
    let test_set = to_set(&test).map_err(|e| e.to_string())?;
    let tc = TrainConfig { seed: SYNTH_SEED, max_epochs: SYNTH_MAX_EPOCHS, ..Default::default() };
    let (model, history) = train(&train_set, &val_set, &tc).map_err(|e| e.to_string())?;
    let preds: Vec<usize> = predict_set(&model, &test_set).map_err(|e| e.to_string())?.into_iter().map(|p| p.0).collect();
    let m = metrics(&preds, test_set.labels()).map_err(|e| e.to_string())?;
    Ok(SynthRun {
        macro_f1: m.macro_f1,
        epochs: history.last_epoch(),
        elapsed: t.elapsed(),
        model,
        test,
        truth: out.truth,
    })
}

fn saliency_scores(run: &SynthRun) -> (f64, usize, f64) {
    let test32: Vec<HrtfSample<f32>> = run
        .test
        .iter()
        .map(|s| HrtfSample {
            ipsi: s.ipsi.iter().map(|&v| v as f32).collect(),
            contra: s.contra.iter().map(|&v| v as f32).collect(),
            freq_axis: Arc::clone(&s.freq_axis),
            direction: s.direction,
            subject_id: s.subject_id.clone(),
            dataset_id: s.dataset_id.clone(),
            direction_index: s.direction_index,
            preproc: s.preproc.clone(),
        })
        .collect();
    let refs: Vec<&HrtfSample<f32>> = test32.iter().collect();
    let maps = explain_all(&run.model, &refs, None).unwrap();
    let (mut sum, mut n, mut base) = (0.0, 0usize, 0.0);
    for (s, m) in test32.iter().zip(&maps) {
        let cues = &run.truth.get(&s.subject_id, s.direction_index).expect("ground truth row").cues;
        base += uniform_baseline_score(cues, &s.freq_axis);
        if m.is_correct() {
            if let Some(v) = saliency_localization_score(&m.values, cues, &s.freq_axis).unwrap() {
                sum += v;
                n += 1;
            }
        }
    }
    (if n > 0 { sum / n as f64 } else { 0.0 }, n, base / test32.len() as f64)
}

fn aee_property() -> (Option<bool>, String) {
    let mut worst = 0.0f64;
    let mut widened = 0;
    for seed in 0..AEE_SUBJECTS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let bins = rng.random_range(8..300);
        let axis = Arc::new(AxisSpec::linear(2 * (bins - 1), 44_100.0));
        let n = rng.random_range(3..60);
        // Every fourth subject has no measurement near the equator.
        let min_el = if seed % 4 == 3 { 20.0 } else { -80.0 };
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let mut samples: Vec<HrtfSample<f64>> = (0..n)
            .map(|d| {
                let el = if d % 3 == 0 && min_el < 0.0 { rng.random_range(-4.0..4.0) } else { rng.random_range(min_el..80.0) };
                let v = VerticalPolar::new(rng.random_range(-180.0..180.0), el).unwrap();
                HrtfSample {
                    ipsi: (0..bins).map(|_| scale * rng.random_range(0.0..3.0)).collect(),
                    contra: (0..bins).map(|_| scale * rng.random_range(0.0..3.0)).collect(),
                    freq_axis: Arc::clone(&axis),
                    direction: Direction::from_vertical(v, None),
                    subject_id: format!("s{seed}"),
                    dataset_id: "aee".into(),
                    direction_index: d,
                    preproc: String::new(),
                }
            })
            .collect();
        let report = aee_normalize(&mut samples).unwrap();
        widened += report.widened_to_deg.is_some() as usize;
        worst = worst.max((equator_energy(&samples).unwrap() - 1.0).abs());
    }
    (
        Some(worst < AEE_TOL),
        format!("max |equator energy - 1| = {worst:.2e} over {AEE_SUBJECTS} subjects ({widened} without an equator ring)"),
    )
}

fn erb_filterbank() -> (Option<bool>, String) {
    let cfg = PreprocConfig::preset(Preset::Perceptual);
    let axis = AxisSpec::linear(cfg.fft_size, cfg.target_rate_hz);
    let fb = build_erb_filterbank::<f64>(ERB_FILTERS, ERB_LOW_HZ, ERB_HIGH_HZ, &axis).unwrap();
    let c = fb.center_hz();
    let span = (c[0] - ERB_LOW_HZ).abs().max((c[c.len() - 1] - ERB_HIGH_HZ).abs());
    let step = (erb_rate(ERB_HIGH_HZ) - erb_rate(ERB_LOW_HZ)) / (ERB_FILTERS - 1) as f64;
    let spacing = c.windows(2).map(|w| (erb_rate(w[1]) - erb_rate(w[0]) - step).abs()).fold(0.0, f64::max);
    let out = apply_filterbank(&vec![1.0; fb.fft_bins()], &fb).unwrap();
    let (lo, hi) = out.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let ratio = hi / lo;
    (
        Some(c.len() == ERB_FILTERS && span <= ERB_TOL && spacing <= ERB_TOL && ratio < ERB_COVERAGE_MAX),
        format!(
            "{} centers {}..{} Hz (edge error {span:.1e}), ERB spacing error {spacing:.1e}, flat coverage max/min {ratio:.3}",
            c.len(),
            c[0],
            c[c.len() - 1]
        ),
    )
}

fn determinism() -> (Option<bool>, String) {
    let spec = SynthSpec { n_subjects: 6, ..Default::default() };
    let out = generate(&spec, 3).unwrap();
    let cfg = PreprocConfig::preset(Preset::Optimized);
    let samples: Vec<Vec<HrtfSample<f64>>> = out
        .subjects
        .iter()
        .map(|s| preprocess_subject(&s.to_hrirs::<f64>().unwrap(), &cfg).unwrap().samples)
        .collect();
    let tr = LabeledSet::from_samples(&samples[..4].concat()).unwrap();
    let va = LabeledSet::from_samples(&samples[4]).unwrap();
    let te = LabeledSet::from_samples(&samples[5]).unwrap();
    let tc = TrainConfig { max_epochs: 3, seed: 9, ..Default::default() };
    let bytes = |seed: u64| {
        let (m, _) = train(&tr, &va, &TrainConfig { seed, ..tc.clone() }).unwrap();
        let mut buf = vec![];
        write_model_to(&m, &mut buf).unwrap();
        (m, buf)
    };
    let (m1, a) = bytes(9);
    let (_, b) = bytes(9);
    let (m2, c) = bytes(10);
    let identical = a == b;

    let f1 = |m: &CnnModel<f64>, s: &LabeledSet<f64>| {
        let p: Vec<usize> = predict_set(m, s).unwrap().into_iter().map(|p| p.0).collect();
        metrics(&p, s.labels()).unwrap().macro_f1
    };
    let matrix = CrossMatrix::new(
        vec!["seed9".into(), "seed10".into()],
        vec!["val".into(), "test".into()],
        vec![vec![f1(&m1, &va), f1(&m1, &te)], vec![f1(&m2, &va), f1(&m2, &te)]],
    )
    .unwrap();
    let mut csv = vec![];
    matrix.write_csv(&mut csv).unwrap();
    let reread = CrossMatrix::read_csv(csv.as_slice()).unwrap();
    let (s1, s2) = (matrix.summary().unwrap(), reread.summary().unwrap());
    let bits = |s: &hrtfxai::eval::CrossSummary| {
        let mut v = vec![s.in_domain.to_bits()];
        if let Some(o) = s.cross_domain {
            v.extend([o.best, o.median, o.average, o.worst].map(f64::to_bits));
        }
        v
    };
    let summary_ok = reread == matrix && bits(&s1) == bits(&s2);
    (
        Some(identical && summary_ok && a != c),
        format!(
            "model files identical: {identical} ({} bytes), other seed differs: {}, summary from CSV bit-exact: {summary_ok}",
            a.len(),
            a != c
        ),
    )
}

/// Optional check on user-supplied CIPIC spectra preprocessed with the
/// Optimized preset (`HRTFXAI_CIPIC_HRS1=<file.hrs1>`).
fn cipic_optional() -> (Option<bool>, String) {
    let Ok(path) = std::env::var("HRTFXAI_CIPIC_HRS1") else {
        return (None, "set HRTFXAI_CIPIC_HRS1 to an Optimized-preset CIPIC .hrs1 file to run".into());
    };
    let run = || -> Result<f64, String> {
        let set = read_hrtf_set::<f64>(&path).map_err(|e| e.to_string())?;
        let mut ids: Vec<String> = set.samples.iter().map(|s| s.subject_id.clone()).collect();
        ids.dedup();
        let split = split_subjects(&ids, &SplitSpec::default()).map_err(|e| e.to_string())?;
        let pick = |v: &[String]| -> Vec<HrtfSample<f64>> {
            set.samples.iter().filter(|s| v.contains(&s.subject_id)).cloned().collect()
        };
        let to_set = |v: &[HrtfSample<f64>]| LabeledSet::from_samples(v).map(|s| s.cast::<f32>()).map_err(|e| e.to_string());
        let (tr, va, te) = (to_set(&pick(&split.train))?, to_set(&pick(&split.val))?, to_set(&pick(&split.test))?);
        let (m, _) = train(&tr, &va, &TrainConfig::default()).map_err(|e| e.to_string())?;
        let p: Vec<usize> = predict_set(&m, &te).map_err(|e| e.to_string())?.into_iter().map(|p| p.0).collect();
        Ok(metrics(&p, te.labels()).map_err(|e| e.to_string())?.macro_f1)
    };
    match run() {
        Ok(f1) => (Some(f1 >= CIPIC_F1_MIN), format!("in-domain macro-F1 {f1:.4} (target >= {CIPIC_F1_MIN})")),
        Err(e) => (Some(false), e),
    }
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));
    println!("hrtfxai {} acceptance", hrtfxai::VERSION);
    let mut r = Report::default();
    if wanted("parameter-count") {
        r.record("parameter-count", true, param_counts);
    }
    if wanted("gradient") {
        r.record("gradient-correctness", true, gradient_check);
    }
    if wanted("cam") {
        r.record("cam-completeness", true, cam_completeness);
    }
    if wanted("coordinate") {
        r.record("coordinate-sector-oracle", true, coordinate_oracle);
    }
    if wanted("aee") {
        r.record("aee-postcondition", true, aee_property);
    }
    if wanted("erb") {
        r.record("erb-filterbank", true, erb_filterbank);
    }
    if wanted("determinism") {
        r.record("determinism", true, determinism);
    }
    if wanted("synth") || wanted("saliency") {
        let main = synth_run(&SynthSpec::default());
        r.record("synth-end-to-end", true, || {
            let main = match &main {
                Ok(m) => m,
                Err(e) => return (Some(false), e.clone()),
            };
            let neg = match synth_run(&SynthSpec::default().negative_control()) {
                Ok(n) => n,
                Err(e) => return (Some(false), format!("negative control: {e}")),
            };
            let pass = main.macro_f1 >= SYNTH_F1_MIN
                && main.epochs <= SYNTH_MAX_EPOCHS
                && main.elapsed <= SYNTH_WALL_CLOCK
                && neg.macro_f1 < NEGATIVE_F1_MAX;
            (
                Some(pass),
                format!(
                    "held-out macro-F1 {:.4} after {} epochs in {:.0} s (limits >= {SYNTH_F1_MIN}, <= {SYNTH_MAX_EPOCHS}, <= {} s); negative control macro-F1 {:.4} (< {NEGATIVE_F1_MAX}) after {} epochs",
                    main.macro_f1,
                    main.epochs,
                    main.elapsed.as_secs_f64(),
                    SYNTH_WALL_CLOCK.as_secs(),
                    neg.macro_f1,
                    neg.epochs
                ),
            )
        });
        r.record("saliency-faithfulness", true, || {
            let Ok(main) = &main else {
                return (Some(false), "synthetic run failed".into());
            };
            let (score, n, baseline) = saliency_scores(main);
            (
                Some(score >= SALIENCY_MIN && baseline < BASELINE_MAX),
                format!(
                    "mean localization score {score:.4} over {n} correct samples (>= {SALIENCY_MIN}); uniform baseline {baseline:.4} (< {BASELINE_MAX}); lift {:.2}x",
                    score / baseline
                ),
            )
        });
    }
    if wanted("real-data") {
        r.record("real-data-cipic", false, cipic_optional);
    }
    let failed = r.failed();
    println!("{} criteria, {} gating failure(s)", r.lines.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde_json::{json, Value};

use hrtfxai::dataset::{
    build_combined, read_subject, split_subjects, write_manifest, write_hrtf_set, write_subject, CombinedSpec,
    ManifestEntry, SplitSpec, SubjectRecord, SubjectSplit,
};
use hrtfxai::dsp::{preprocess_subject, HrtfSample, PreprocConfig, Preset};
use hrtfxai::eval::{
    confusion, metrics_with_space, present_classes, predict_checked, write_confusion_csv, write_metrics_csv,
    CrossMatrix, TestSet,
};
use hrtfxai::model::{load_model, save_model, train as fit, History, LabeledSet, TrainConfig};
use hrtfxai::synth::{generate, write_ground_truth_csv, SynthSpec};
use hrtfxai::xai::{
    aggregate, equalize_and_msc, nearest_sample, occlusion_render, prototype as build_prototype, rank_subjects,
    sagittal_map, write_msc_csv, write_saliency_csv, write_stack, SaliencyStack, SAGITTAL_TOLERANCE_DEG,
};
use hrtfxai::{ElevationClass, Error, Model};

use crate::data::{files_with_ext, hrir_entries, select, slug, subject_ids, Spectra, SplitTable, MANIFEST_FILE, RUN_FILE};
use crate::run_manifest::RunManifest;
use crate::{
    resolve_seed, EvalArgs, ExplainArgs, IngestArgs, Precision, PresetArg, PreprocessArgs, PrototypeArgs, SplitArgs,
    SynthArgs, TrainArgs, UsageError,
};

type Res = anyhow::Result<()>;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn create_dir(dir: &Path) -> Res {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn check_record(entry: &ManifestEntry, rec: &SubjectRecord) -> Res {
    for (what, listed, stored) in [("subject", &entry.subject_id, &rec.subject_id), ("dataset", &entry.dataset_id, &rec.dataset_id)] {
        if !listed.is_empty() && listed != stored {
            return Err(Error::Format(format!("manifest lists {what} {listed:?} but the file holds {stored:?}"))
                .at(&entry.path)
                .into());
        }
    }
    Ok(())
}

fn read_records(entries: &[ManifestEntry]) -> anyhow::Result<Vec<SubjectRecord>> {
    entries
        .par_iter()
        .map(|e| {
            let rec = read_subject(&e.path)?;
            check_record(e, &rec)?;
            Ok(rec)
        })
        .collect()
}

pub fn ingest(a: IngestArgs) -> Res {
    let mut run = RunManifest::new("ingest");
    run.input(&a.manifest);
    let entries = hrtfxai::dataset::read_manifest(&a.manifest)?;
    let records = read_records(&entries)?;
    create_dir(&a.out)?;

    #[derive(Default)]
    struct Row {
        subjects: usize,
        directions: usize,
        min_dirs: usize,
        max_dirs: usize,
        rates: BTreeSet<u64>,
        lengths: BTreeSet<usize>,
    }
    let mut rows: BTreeMap<&str, Row> = BTreeMap::new();
    for r in &records {
        let row = rows.entry(&r.dataset_id).or_default();
        let n = r.n_directions();
        row.min_dirs = if row.subjects == 0 { n } else { row.min_dirs.min(n) };
        row.max_dirs = row.max_dirs.max(n);
        row.subjects += 1;
        row.directions += n;
        row.rates.insert(r.sample_rate_hz.to_bits());
        row.lengths.insert(r.n_samples);
    }
    let join = |it: Vec<String>| it.join(";");
    let summary = a.out.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(["dataset_id", "subjects", "directions", "min_directions", "max_directions", "sample_rates_hz", "ir_lengths"])?;
    println!("{:<16} {:>8} {:>10} {:>14} {:>10}", "dataset", "subjects", "directions", "sample rate", "IR length");
    for (id, r) in &rows {
        let rates = join(r.rates.iter().map(|b| f64::from_bits(*b).to_string()).collect());
        let lengths = join(r.lengths.iter().map(usize::to_string).collect());
        w.write_record([
            id.to_string(),
            r.subjects.to_string(),
            r.directions.to_string(),
            r.min_dirs.to_string(),
            r.max_dirs.to_string(),
            rates.clone(),
            lengths.clone(),
        ])?;
        println!("{id:<16} {:>8} {:>10} {rates:>14} {lengths:>10}", r.subjects, r.directions);
    }
    w.flush()?;

    let resolved: Vec<ManifestEntry> = entries
        .iter()
        .map(|e| {
            let path = fs::canonicalize(&e.path).unwrap_or_else(|_| e.path.clone());
            ManifestEntry { path, ..e.clone() }
        })
        .collect();
    let manifest = a.out.join(MANIFEST_FILE);
    write_manifest(&resolved, &manifest)?;
    run.output(&summary);
    run.output(&manifest);
    run.note("subjects", json!(records.len()));
    run.write(&a.out.join(RUN_FILE))
}

fn load_config(a: &PreprocessArgs) -> anyhow::Result<PreprocConfig> {
    let cfg = match &a.config {
        Some(p) => PreprocConfig::from_kv(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .map_err(|e| e.at(p))?,
        None => PreprocConfig::preset(match a.preset {
            PresetArg::Raw => Preset::Raw,
            PresetArg::Optimized => Preset::Optimized,
            PresetArg::Perceptual => Preset::Perceptual,
        }),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn preprocess(a: PreprocessArgs) -> Res {
    let mut run = RunManifest::new("preprocess");
    let cfg = load_config(&a)?;
    let entries = hrir_entries(&a.input)?;
    let records = read_records(&entries)?;
    let processed: Vec<(String, Vec<HrtfSample<f64>>)> = records
        .par_iter()
        .map(|r| -> anyhow::Result<_> {
            let hrirs = r.to_hrirs::<f64>()?;
            let out = preprocess_subject(&hrirs, &cfg)?;
            if let Some(aee) = &out.aee {
                if let Some(w) = aee.widened_to_deg {
                    log::warn!("{}: no equator measurement, used the ring at {w:.1} deg", r.subject_id);
                }
            }
            Ok((r.dataset_id.clone(), out.samples))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut by_dataset: BTreeMap<String, Vec<HrtfSample<f64>>> = BTreeMap::new();
    for (ds, samples) in processed {
        by_dataset.entry(ds).or_default().extend(samples);
    }
    create_dir(&a.out)?;
    for (ds, samples) in &by_dataset {
        let path = a.out.join(format!("{}.hrs1", slug(ds)));
        write_hrtf_set(samples, &cfg, &path)?;
        log::info!("{ds}: {} spectra of {} bins -> {}", samples.len(), cfg.output_bins(), path.display());
        run.output(path);
    }
    let kv = a.out.join("preproc.kv");
    fs::write(&kv, cfg.to_kv())?;
    run.output(kv);
    for e in &entries {
        run.input(&e.path);
    }
    run.fingerprint(cfg.fingerprint());
    println!("{}", cfg.fingerprint());
    run.write(&a.out.join(RUN_FILE))
}

fn compute_splits(spectra: &Spectra, seed: u64) -> anyhow::Result<SplitTable> {
    let mut table = SplitTable::default();
    for (ds, samples) in &spectra.datasets {
        let split = split_subjects(&subject_ids(samples), &SplitSpec { seed, ..Default::default() })
            .map_err(|e| anyhow::Error::new(e).context(format!("splitting dataset {ds}")))?;
        table.0.insert(ds.clone(), split);
    }
    Ok(table)
}

pub fn split(a: SplitArgs) -> Res {
    let mut run = RunManifest::new("split");
    let seed = resolve_seed(a.seed)?;
    let spectra = Spectra::load(&a.data)?;
    let table = compute_splits(&spectra, seed)?;
    table.write(&a.out)?;
    run.seed("split", seed);
    run.fingerprint(spectra.config.fingerprint());
    spectra.files.iter().for_each(|f| run.input(f));
    run.output(&a.out);
    run.write(&sibling(&a.out, ".run.json"))
}

fn write_history(h: &History, path: &Path) -> Res {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "val_accuracy", "learning_rate"])?;
    for e in &h.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.to_string(),
            e.val_accuracy.to_string(),
            e.learning_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Res {
    let mut run = RunManifest::new("train");
    let seed = resolve_seed(a.seed)?;
    if let Some(f) = a.combined_frac {
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("--combined-frac {f} must lie in (0, 1]")));
        }
    }
    let spectra = Spectra::load(&a.data)?;
    let table = match &a.split {
        Some(p) => {
            run.input(p);
            SplitTable::read(p)?
        }
        None => compute_splits(&spectra, seed)?,
    };

    let mut train_parts = vec![];
    let mut val_parts = vec![];
    for (ds, samples) in &spectra.datasets {
        let split: &SubjectSplit =
            table.0.get(ds).ok_or_else(|| Error::Config(format!("split has no entry for dataset {ds}")))?;
        if split.val.is_empty() {
            return Err(Error::Config(format!("dataset {ds} has no validation subjects")).into());
        }
        train_parts.push(select(samples, &split.train));
        val_parts.push(select(samples, &split.val));
    }
    let (train_samples, val_samples): (Vec<_>, Vec<_>) = match a.combined_frac {
        Some(fraction) => {
            let spec = CombinedSpec { fraction, seed };
            (build_combined(&train_parts, &spec)?, build_combined(&val_parts, &spec)?)
        }
        None => (train_parts.concat(), val_parts.concat()),
    };
    if val_samples.is_empty() {
        return Err(Error::Empty("validation samples").into());
    }
    let train_set = LabeledSet::from_samples(&train_samples)?;
    let val_set = LabeledSet::from_samples(&val_samples)?;
    log::info!("training on {} samples, validating on {}", train_set.len(), val_set.len());

    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        seed,
        ..Default::default()
    };
    let (mut model, history): (Model, History) = match a.precision {
        Precision::F64 => fit(&train_set, &val_set, &cfg)?,
        Precision::F32 => {
            let (m, h) = fit(&train_set.cast::<f32>(), &val_set.cast::<f32>(), &cfg)?;
            (m.cast::<f64>(), h)
        }
    };
    model.meta.preproc = Some(spectra.config.to_kv());
    save_model(&model, &a.out)?;

    let history_path = sibling(&a.out, ".history.csv");
    write_history(&history, &history_path)?;
    let split_path = sibling(&a.out, ".split.csv");
    table.write(&split_path)?;

    run.seed("train", seed);
    run.fingerprint(spectra.config.fingerprint());
    spectra.files.iter().for_each(|f| run.input(f));
    for p in [&a.out, &history_path, &split_path] {
        run.output(p);
    }
    run.note("epochs_run", json!(history.last_epoch()));
    run.note("best_epoch", json!(history.best_epoch));
    run.note("stopped_early", json!(history.stopped_early));
    run.note("lr_reductions", json!(history.lr_reductions));
    run.note("precision", json!(if a.precision == Precision::F32 { "f32" } else { "f64" }));
    run.note("combined_fraction", json!(a.combined_frac));
    run.write(&sibling(&a.out, ".run.json"))
}

fn load_splits(paths: &[PathBuf]) -> anyhow::Result<SplitTable> {
    let mut table = SplitTable::default();
    for p in paths {
        table.merge(SplitTable::read(p)?);
    }
    Ok(table)
}

/// Samples each dataset is scored or explained on: its test subjects when a
/// split lists the dataset, all of it otherwise.
fn held_out(spectra: &Spectra, table: &SplitTable) -> Vec<(String, Vec<HrtfSample<f64>>)> {
    spectra
        .datasets
        .iter()
        .map(|(ds, samples)| match table.0.get(ds) {
            Some(split) => (ds.clone(), select(samples, &split.test)),
            None => (ds.clone(), samples.clone()),
        })
        .collect()
}

pub fn eval(a: EvalArgs) -> Res {
    let mut run = RunManifest::new("eval");
    let models: Vec<(String, Model)> = a
        .model
        .iter()
        .map(|p| Ok((stem(p), load_model::<f64>(p)?)))
        .collect::<anyhow::Result<_>>()?;
    let names: BTreeSet<&str> = models.iter().map(|(n, _)| n.as_str()).collect();
    if names.len() != models.len() {
        return Err(usage("model file names must have distinct stems"));
    }
    let spectra = Spectra::load(&a.test)?;
    let table = load_splits(&a.split)?;
    let preproc = spectra.config.to_kv();
    let mut tests = vec![];
    for ((ds, all), (_, chosen)) in spectra.datasets.iter().zip(held_out(&spectra, &table)) {
        if chosen.is_empty() {
            return Err(Error::Config(format!("dataset {ds} has no test samples")).into());
        }
        let labels: Vec<usize> = all.iter().map(HrtfSample::label).collect();
        tests.push(TestSet {
            name: ds.clone(),
            set: LabeledSet::from_samples(&chosen)?,
            label_space: present_classes(&labels),
            preproc: Some(preproc.clone()),
        });
    }

    let pairs: Vec<(usize, usize)> = (0..models.len()).flat_map(|i| (0..tests.len()).map(move |j| (i, j))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(i, j)| {
            let t = &tests[j];
            let preds = predict_checked(&models[i].1, t)?;
            let m = metrics_with_space(&preds, t.set.labels(), &t.label_space)?;
            let c = confusion(&preds, t.set.labels())?;
            Ok((m, c))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let f1: Vec<Vec<f64>> = cells.chunks(tests.len()).map(|row| row.iter().map(|(m, _)| m.macro_f1).collect()).collect();
    let cross = CrossMatrix::new(
        models.iter().map(|(n, _)| n.clone()).collect(),
        tests.iter().map(|t| t.name.clone()).collect(),
        f1,
    )?;
    let summary = if models.len() == tests.len() { Some(cross.summary()?) } else { None };

    let out_dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    create_dir(&out_dir)?;
    let report_stem = stem(&a.out);
    let mut cell_docs = vec![];
    for (&(i, j), (m, c)) in pairs.iter().zip(&cells) {
        let base = format!("{report_stem}.{}.{}", slug(&models[i].0), slug(&tests[j].name));
        let mpath = out_dir.join(format!("{base}.metrics.csv"));
        let cpath = out_dir.join(format!("{base}.confusion.csv"));
        write_metrics_csv(m, fs::File::create(&mpath)?)?;
        write_confusion_csv(c, fs::File::create(&cpath)?)?;
        run.output(&mpath);
        run.output(&cpath);
        cell_docs.push(json!({
            "model": models[i].0,
            "dataset": tests[j].name,
            "metrics": m,
            "confusion": c,
        }));
    }
    let cross_path = sibling(&out_dir.join(&report_stem), ".cross.csv");
    cross.write_csv(fs::File::create(&cross_path)?)?;

    let model_docs: Vec<Value> = models
        .iter()
        .zip(&a.model)
        .map(|((n, m), p)| json!({ "name": n, "path": p, "seed": m.meta.seed, "input_bins": m.meta.input_bins }))
        .collect();
    let report = json!({
        "models": model_docs,
        "datasets": tests.iter().map(|t| json!({
            "name": t.name,
            "samples": t.set.len(),
            "label_space": t.label_space.iter().map(|c| c.abbrev()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "preproc_fingerprint": spectra.config.fingerprint(),
        "label_space_rule": "macro averages run over the classes present anywhere in the tested dataset; classes in that space with no test samples count as F1 0",
        "cells": cell_docs,
        "cross_matrix": { "models": cross.models, "datasets": cross.datasets, "f1": cross.f1 },
        "summary": summary,
    });
    fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")?;
    for row in &cross.f1 {
        println!("{}", row.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("  "));
    }

    run.fingerprint(spectra.config.fingerprint());
    a.model.iter().chain(&a.split).for_each(|p| run.input(p));
    spectra.files.iter().for_each(|f| run.input(f));
    run.output(&a.out);
    run.output(&cross_path);
    run.write(&sibling(&a.out, ".run.json"))
}

fn parse_classes(arg: &str) -> anyhow::Result<Vec<ElevationClass>> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(ElevationClass::ALL.to_vec());
    }
    arg.parse::<ElevationClass>().map(|c| vec![c]).map_err(|e| usage(e.to_string()))
}

fn write_occlusion_csv(stack: &SaliencyStack<f64>, samples: &[HrtfSample<f64>], freqs: &[f64], path: &Path) -> Res {
    let index: HashMap<(&str, usize), &HrtfSample<f64>> =
        samples.iter().map(|s| ((s.subject_id.as_str(), s.direction_index), s)).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["subject_id".to_string(), "direction_index".into(), "channel".into()];
    header.extend(freqs.iter().map(f64::to_string));
    w.write_record(&header)?;
    for row in &stack.rows {
        let s = index[&(row.source.subject_id.as_str(), row.source.direction_index)];
        for (channel, mags) in [("ipsi", &s.ipsi), ("contra", &s.contra)] {
            let mut rec = vec![s.subject_id.clone(), s.direction_index.to_string(), channel.to_string()];
            rec.extend(occlusion_render(mags, &row.values)?.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn explain(a: ExplainArgs) -> Res {
    let mut run = RunManifest::new("explain");
    let classes = parse_classes(&a.class)?;
    let model = load_model::<f64>(&a.model)?;
    let spectra = Spectra::load(&a.data)?;
    let table = load_splits(&a.split)?;
    let data = held_out(&spectra, &table);
    let freqs = spectra.all().next().map(|s| s.freq_axis.bin_center_hz.clone()).unwrap_or_default();
    create_dir(&a.out)?;

    let summary_path = a.out.join("explain_summary.csv");
    let mut summary = csv::Writer::from_path(&summary_path)?;
    summary.write_record(["class", "dataset_id", "stack_rows", "msc_rows_kept"])?;
    for class in classes {
        let abbrev = class.abbrev();
        let stacks = data
            .par_iter()
            .map(|(ds, samples)| aggregate(samples, &model, ds, class.index(), !a.include_incorrect))
            .collect::<Result<Vec<_>, _>>()?;
        for ((ds, samples), stack) in data.iter().zip(&stacks) {
            let base = format!("{abbrev}_{}", slug(ds));
            let stack_path = a.out.join(format!("stack_{base}.bin"));
            let sal_path = a.out.join(format!("saliency_{base}.csv"));
            let occ_path = a.out.join(format!("occlusion_{base}.csv"));
            write_stack(stack, &stack_path)?;
            write_saliency_csv(&stack.rows, &freqs, fs::File::create(&sal_path)?)?;
            write_occlusion_csv(stack, samples, &freqs, &occ_path)?;
            for p in [stack_path, sal_path, occ_path] {
                run.output(p);
            }
        }
        let kept = if stacks.iter().all(SaliencyStack::is_empty) {
            log::warn!(
                "class {abbrev}: no {}samples to explain; stacks are empty and no contour was written",
                if a.include_incorrect { "" } else { "correctly classified " }
            );
            None
        } else {
            let (msc, _) = equalize_and_msc(&stacks)?;
            let path = a.out.join(format!("msc_{abbrev}.csv"));
            write_msc_csv(&msc, &freqs, fs::File::create(&path)?)?;
            run.output(path);
            Some(msc.rows_kept)
        };
        for stack in &stacks {
            let kept_here = if stack.is_empty() { String::new() } else { kept.map(|k| k.to_string()).unwrap_or_default() };
            summary.write_record([abbrev, &stack.dataset_id, &stack.len().to_string(), &kept_here])?;
        }
    }
    summary.flush()?;
    run.output(&summary_path);
    run.fingerprint(spectra.config.fingerprint());
    run.input(&a.model);
    spectra.files.iter().for_each(|f| run.input(f));
    run.note("only_correct", json!(!a.include_incorrect));
    run.write(&a.out.join(RUN_FILE))
}

pub fn prototype(a: PrototypeArgs) -> Res {
    let mut run = RunManifest::new("prototype");
    if !(a.variance > 0.0 && a.variance <= 1.0) {
        return Err(usage(format!("--variance {} must lie in (0, 1]", a.variance)));
    }
    let model = load_model::<f64>(&a.model)?;
    let spectra = Spectra::load(&a.data)?;
    let all: Vec<HrtfSample<f64>> = spectra.all().cloned().collect();
    let freqs = all.first().map(|s| s.freq_axis.bin_center_hz.clone()).unwrap_or_default();
    create_dir(&a.out)?;

    let index_path = a.out.join("prototypes.csv");
    let mut index = csv::Writer::from_path(&index_path)?;
    index.write_record([
        "class",
        "n_samples",
        "components",
        "variance_explained",
        "predicted",
        "confidence",
        "nearest_subject_id",
        "nearest_dataset_id",
        "nearest_direction_index",
    ])?;
    let results = ElevationClass::ALL
        .par_iter()
        .map(|&class| {
            let members: Vec<&HrtfSample<f64>> = all.iter().filter(|s| s.label() == class.index()).collect();
            if members.is_empty() {
                return Ok(None);
            }
            let p = build_prototype(&members, &model, a.variance)?;
            let nearest = members[nearest_sample(&members, &p.to_input())?];
            Ok(Some((class, p, nearest)))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for (class, p, nearest) in results.into_iter().flatten() {
        let path = a.out.join(format!("prototype_{}.csv", class.abbrev()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["freq_hz", "ipsi", "contra", "saliency"])?;
        for b in 0..freqs.len() {
            w.write_record([freqs[b], p.ipsi[b], p.contra[b], p.saliency.values[b]].map(|v| v.to_string()))?;
        }
        w.flush()?;
        run.output(path);
        index.write_record([
            class.abbrev().to_string(),
            p.n_samples.to_string(),
            p.components.to_string(),
            p.variance_explained.to_string(),
            ElevationClass::from_index(p.saliency.predicted)?.abbrev().to_string(),
            p.saliency.confidence.to_string(),
            nearest.subject_id.clone(),
            nearest.dataset_id.clone(),
            nearest.direction_index.to_string(),
        ])?;
    }
    index.flush()?;
    run.output(&index_path);

    let ranking = rank_subjects(&all, &model, SAGITTAL_TOLERANCE_DEG)?;
    let rank_path = a.out.join("sagittal_ranking.csv");
    let mut w = csv::Writer::from_path(&rank_path)?;
    w.write_record(["subject_id", "mean_confidence"])?;
    for (id, score) in &ranking {
        w.write_record([id.clone(), score.to_string()])?;
    }
    w.flush()?;
    run.output(&rank_path);
    if ranking.is_empty() {
        log::warn!("no median-plane samples within {SAGITTAL_TOLERANCE_DEG} deg lateral; no sagittal maps written");
    }
    for (id, _) in ranking.iter().take(a.top_subjects) {
        let subject: Vec<HrtfSample<f64>> = all.iter().filter(|s| &s.subject_id == id).cloned().collect();
        let rows = sagittal_map(&subject, &model, SAGITTAL_TOLERANCE_DEG)?;
        let path = a.out.join(format!("sagittal_{}.csv", slug(id)));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["polar_deg".to_string(), "direction_index".into(), "predicted".into(), "confidence".into()];
        header.extend(freqs.iter().map(f64::to_string));
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![
                r.polar_deg.to_string(),
                r.saliency.source.direction_index.to_string(),
                ElevationClass::from_index(r.saliency.predicted)?.abbrev().to_string(),
                r.saliency.confidence.to_string(),
            ];
            rec.extend(r.saliency.values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        run.output(path);
    }

    run.fingerprint(spectra.config.fingerprint());
    run.input(&a.model);
    spectra.files.iter().for_each(|f| run.input(f));
    run.note("variance", json!(a.variance));
    run.write(&a.out.join(RUN_FILE))
}

pub fn synth(a: SynthArgs) -> Res {
    let mut run = RunManifest::new("synth");
    let seed = resolve_seed(a.seed)?;
    let mut spec = match &a.spec {
        Some(p) => {
            run.input(p);
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SynthSpec::from_kv(&text).map_err(|e| e.at(p))?
        }
        None => SynthSpec::default(),
    };
    if a.negative_control {
        spec = spec.negative_control();
    }
    let out = generate(&spec, seed)?;
    create_dir(&a.out)?;
    for stale in files_with_ext(&a.out, "hrd1")? {
        fs::remove_file(stale)?;
    }
    let mut entries = vec![];
    for rec in &out.subjects {
        let name = format!("{}.hrd1", slug(&rec.subject_id));
        write_subject(rec, a.out.join(&name))?;
        entries.push(ManifestEntry { subject_id: rec.subject_id.clone(), path: name.into(), dataset_id: rec.dataset_id.clone() });
    }
    let manifest = a.out.join(MANIFEST_FILE);
    write_manifest(&entries, &manifest)?;
    let truth = a.out.join("ground_truth.csv");
    write_ground_truth_csv(&out.truth, fs::File::create(&truth)?)?;
    let spec_path = a.out.join("spec.kv");
    fs::write(&spec_path, spec.to_kv())?;
    if out.negative_control {
        log::warn!("negative control: notch depth is zero, the data carries no elevation cue");
    }
    println!("{} subjects, {} ground-truth rows", out.subjects.len(), out.truth.len());

    run.seed("synth", seed);
    for e in &entries {
        run.output(a.out.join(&e.path));
    }
    for p in [&manifest, &truth, &spec_path] {
        run.output(p);
    }
    run.note("negative_control", json!(out.negative_control));
    run.write(&a.out.join(RUN_FILE))
}

//! Reading the directories the commands exchange.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hrtfxai::dataset::{read_hrtf_set, read_manifest, ManifestEntry, SubjectSplit};
use hrtfxai::dsp::{HrtfSample, PreprocConfig};
use hrtfxai::Error;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const RUN_FILE: &str = "run.json";

/// Files in `dir` with the given extension, sorted by name.
pub fn files_with_ext(dir: &Path, ext: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = vec![];
    for e in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Subjects of an HRIR directory: its manifest if present, otherwise every
/// `.hrd1` file (subject and dataset ids then come from the files).
pub fn hrir_entries(dir: &Path) -> anyhow::Result<Vec<ManifestEntry>> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return Ok(read_manifest(&manifest)?);
    }
    let files = files_with_ext(dir, "hrd1")?;
    if files.is_empty() {
        return Err(Error::Empty("HRD1 files").at(dir).into());
    }
    Ok(files
        .into_iter()
        .map(|p| ManifestEntry { subject_id: String::new(), path: p, dataset_id: String::new() })
        .collect())
}

/// All preprocessed samples under `dirs`, grouped by dataset id in first-seen order.
pub struct Spectra {
    pub config: PreprocConfig,
    pub datasets: Vec<(String, Vec<HrtfSample<f64>>)>,
    pub files: Vec<PathBuf>,
}

impl Spectra {
    pub fn load(dirs: &[PathBuf]) -> anyhow::Result<Self> {
        let mut config: Option<PreprocConfig> = None;
        let mut datasets: Vec<(String, Vec<HrtfSample<f64>>)> = vec![];
        let mut files = vec![];
        for dir in dirs {
            let found = files_with_ext(dir, "hrs1")?;
            if found.is_empty() {
                return Err(Error::Empty("preprocessed .hrs1 files").at(dir).into());
            }
            for f in found {
                let set = read_hrtf_set::<f64>(&f)?;
                match &config {
                    None => config = Some(set.config.clone()),
                    Some(c) if c.fingerprint() != set.config.fingerprint() => {
                        return Err(Error::Config("inputs were preprocessed with different configurations".into())
                            .at(&f)
                            .into())
                    }
                    _ => {}
                }
                for s in set.samples {
                    match datasets.iter_mut().find(|(id, _)| *id == s.dataset_id) {
                        Some((_, v)) => v.push(s),
                        None => datasets.push((s.dataset_id.clone(), vec![s])),
                    }
                }
                files.push(f);
            }
        }
        let config = config.expect("at least one file");
        Ok(Self { config, datasets, files })
    }

    pub fn all(&self) -> impl Iterator<Item = &HrtfSample<f64>> {
        self.datasets.iter().flat_map(|(_, v)| v)
    }
}

pub fn subject_ids(samples: &[HrtfSample<f64>]) -> Vec<String> {
    samples.iter().map(|s| s.subject_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Subject partitions keyed by dataset id, as stored in a split CSV.
#[derive(Default)]
pub struct SplitTable(pub BTreeMap<String, SubjectSplit>);

impl SplitTable {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset_id", "subject_id", "partition"])?;
        for (ds, split) in &self.0 {
            for (part, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
                for id in ids {
                    w.write_record([ds.as_str(), id.as_str(), part])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut table: BTreeMap<String, SubjectSplit> = BTreeMap::new();
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening split {}", path.display()))?;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 3 {
                bail!(Error::Format(format!("{}: split rows need 3 fields", path.display())));
            }
            let e = table.entry(rec[0].to_string()).or_insert_with(|| SubjectSplit {
                train: vec![],
                val: vec![],
                test: vec![],
            });
            let id = rec[1].to_string();
            match &rec[2] {
                "train" => e.train.push(id),
                "val" => e.val.push(id),
                "test" => e.test.push(id),
                other => bail!(Error::Format(format!("{}: unknown partition {other:?}", path.display()))),
            }
        }
        Ok(Self(table))
    }

    pub fn merge(&mut self, other: SplitTable) {
        self.0.extend(other.0);
    }
}

/// Samples of the given subjects, in input order.
pub fn select(samples: &[HrtfSample<f64>], ids: &[String]) -> Vec<HrtfSample<f64>> {
    let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    samples.iter().filter(|s| keep.contains(s.subject_id.as_str())).cloned().collect()
}

/// File-name-safe form of an identifier.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

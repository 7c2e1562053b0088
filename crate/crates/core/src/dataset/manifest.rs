//! Subject manifest: a CSV with columns `subject_id,path,dataset_id`.
//!
//! Relative paths are resolved against the manifest's own directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub path: PathBuf,
    pub dataset_id: String,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let run = || -> Result<Vec<ManifestEntry>> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = vec![];
        for row in rdr.deserialize() {
            let mut e: ManifestEntry = row?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            out.push(e);
        }
        if out.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        let mut ids: Vec<_> = out.iter().map(|e| &e.subject_id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Format(format!("subject {:?} listed twice", w[0])));
        }
        Ok(out)
    };
    run().map_err(|e| e.at(path))
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

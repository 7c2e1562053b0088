//! On-disk formats, subject splits and combined-set sampling.

mod combined;
mod hrd1;
mod hrs1;
mod manifest;
mod split;

pub use combined::{build_combined, CombinedSpec};
pub use hrd1::{
    read_subject, read_subject_from, write_subject, write_subject_to, DirectionEntry,
    SubjectRecord, HRD1_MAGIC,
};
pub use hrs1::{
    read_hrtf_set, read_hrtf_set_from, write_hrtf_set, write_hrtf_set_to, HrtfSet, HRS1_MAGIC,
};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use split::{split_subjects, SplitSpec, SubjectSplit};

use crate::coords::ElevationClass;

/// Sample count per elevation class, indexed by [`ElevationClass::index`].
pub fn class_balance<I>(labels: I) -> [usize; ElevationClass::COUNT]
where
    I: IntoIterator<Item = ElevationClass>,
{
    let mut counts = [0; ElevationClass::COUNT];
    for c in labels {
        counts[c.index()] += 1;
    }
    counts
}

pub(crate) fn round_half_up(x: f64) -> usize {
    // The epsilon absorbs binary representation error in products like 0.1 * 45.
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Length-prefixed JSON framing shared by the binary formats.
pub(crate) mod framing {
    use std::io::{Read, Write};

    use crate::error::{Error, Result};

    pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], json: &[u8]) -> Result<()> {
        let len = u32::try_from(json.len())
            .map_err(|_| Error::Format("metadata block larger than 4 GiB".into()))?;
        w.write_all(magic)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(json)?;
        Ok(())
    }

    /// Reads everything and returns `(metadata json, payload bytes)`.
    pub fn read_framed<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[..8] != magic {
            let n = bytes.len().min(8);
            return Err(Error::MagicMismatch {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&bytes[..n]).into_owned(),
            });
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                section: "metadata length",
                expected: 12,
                found: bytes.len(),
            });
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        if bytes.len() < 12 + len {
            return Err(Error::Truncated {
                section: "metadata",
                expected: len,
                found: bytes.len() - 12,
            });
        }
        let payload = bytes.split_off(12 + len);
        bytes.drain(..12);
        Ok((bytes, payload))
    }
}

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::framing;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{MeanSaliencyContour, SaliencyMap, SaliencyStack, SampleRef};

pub const STACK_MAGIC: &[u8; 8] = b"SALSTK01";

const SALIENCY_COLUMNS: [&str; 7] =
    ["subject_id", "dataset_id", "direction_index", "label", "class_id", "predicted", "confidence"];

fn check_axis(bins: usize, freqs: &[f64]) -> Result<()> {
    if bins != freqs.len() {
        return Err(Error::LengthMismatch { what: "saliency/frequency axis", left: bins, right: freqs.len() });
    }
    Ok(())
}

/// One row per map: provenance columns followed by one column per bin,
/// headed by the bin frequency in Hz.
pub fn write_saliency_csv<T: Scalar, W: Write>(maps: &[SaliencyMap<T>], freqs_hz: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = SALIENCY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(freqs_hz.iter().map(|f| f.to_string()));
    out.write_record(&header)?;
    for m in maps {
        check_axis(m.values.len(), freqs_hz)?;
        let mut rec = vec![
            m.source.subject_id.clone(),
            m.source.dataset_id.clone(),
            m.source.direction_index.to_string(),
            m.source.label.to_string(),
            m.class_id.to_string(),
            m.predicted.to_string(),
            m.confidence.f64().to_string(),
        ];
        rec.extend(m.values.iter().map(|v| v.f64().to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Rows per dataset, then the contour itself under the name `msc`.
pub fn write_msc_csv<T: Scalar, W: Write>(msc: &MeanSaliencyContour<T>, freqs_hz: &[f64], w: W) -> Result<()> {
    check_axis(msc.msc.len(), freqs_hz)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["row".to_string(), "class_id".into(), "rows_kept".into()];
    header.extend(freqs_hz.iter().map(|f| f.to_string()));
    out.write_record(&header)?;
    let names = msc.datasets.iter().map(String::as_str).chain(std::iter::once("msc"));
    for (name, values) in names.zip(msc.per_dataset.iter().chain(std::iter::once(&msc.msc))) {
        let mut rec = vec![name.to_string(), msc.class_id.to_string(), msc.rows_kept.to_string()];
        rec.extend(values.iter().map(|v| v.f64().to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a file written by [`write_msc_csv`]; returns the frequency axis and the contour.
pub fn read_msc_csv<R: Read>(r: R) -> Result<(Vec<f64>, MeanSaliencyContour<f64>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 4 || &header[0] != "row" {
        return Err(Error::Format("MSC csv header must start with row,class_id,rows_kept".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
    let freqs = header.iter().skip(3).map(num).collect::<Result<Vec<f64>>>()?;
    let mut names = vec![];
    let mut rows = vec![];
    let mut meta = None;
    for rec in rd.records() {
        let rec = rec?;
        let class_id: usize = rec[1].parse().map_err(|_| Error::Format("bad class_id".into()))?;
        let kept: usize = rec[2].parse().map_err(|_| Error::Format("bad rows_kept".into()))?;
        if *meta.get_or_insert((class_id, kept)) != (class_id, kept) {
            return Err(Error::Format("MSC rows disagree on class_id or rows_kept".into()));
        }
        names.push(rec[0].to_string());
        rows.push(rec.iter().skip(3).map(num).collect::<Result<Vec<f64>>>()?);
    }
    let (class_id, rows_kept) = meta.ok_or(Error::Empty("MSC rows"))?;
    if names.last().map(String::as_str) != Some("msc") {
        return Err(Error::Format("last MSC row must be named msc".into()));
    }
    let msc = rows.pop().expect("nonempty");
    names.pop();
    Ok((freqs, MeanSaliencyContour { class_id, datasets: names, per_dataset: rows, msc, rows_kept }))
}

#[derive(Serialize, Deserialize)]
struct StackHeader {
    class_id: usize,
    dataset_id: String,
    bins: usize,
    rows: Vec<RowMeta>,
}

#[derive(Serialize, Deserialize)]
struct RowMeta {
    source: SampleRef,
    class_id: usize,
    predicted: usize,
    has_positive_evidence: bool,
    cam_len: usize,
}

/// Binary stack: framed JSON header, then per row the confidence, the
/// saliency values and the raw CAM as little-endian f64.
pub fn write_stack_to<T: Scalar, W: Write>(stack: &SaliencyStack<T>, w: &mut W) -> Result<()> {
    let bins = stack.bins().unwrap_or(0);
    let header = StackHeader {
        class_id: stack.class_id,
        dataset_id: stack.dataset_id.clone(),
        bins,
        rows: stack
            .rows
            .iter()
            .map(|m| RowMeta {
                source: m.source.clone(),
                class_id: m.class_id,
                predicted: m.predicted,
                has_positive_evidence: m.has_positive_evidence,
                cam_len: m.raw_cam.len(),
            })
            .collect(),
    };
    framing::write_header(w, STACK_MAGIC, &serde_json::to_vec(&header)?)?;
    let mut payload = Vec::new();
    for m in &stack.rows {
        if m.values.len() != bins {
            return Err(Error::Shape("stack rows differ in length".into()));
        }
        for v in std::iter::once(&m.confidence).chain(&m.values).chain(&m.raw_cam) {
            payload.extend_from_slice(&v.f64().to_le_bytes());
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_stack_from<T: Scalar, R: Read>(r: &mut R) -> Result<SaliencyStack<T>> {
    let (meta, payload) = framing::read_framed(r, STACK_MAGIC)?;
    let header: StackHeader = serde_json::from_slice(&meta)?;
    let expected: usize = header.rows.iter().map(|m| 8 * (1 + header.bins + m.cam_len)).sum();
    if payload.len() < expected {
        return Err(Error::Truncated { section: "saliency payload", expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!("{} trailing bytes after saliency payload", payload.len() - expected)));
    }
    let mut values = payload.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    let rows = header
        .rows
        .into_iter()
        .map(|m| {
            let confidence = values.next().expect("sized");
            let v: Vec<T> = values.by_ref().take(header.bins).collect();
            let raw_cam: Vec<T> = values.by_ref().take(m.cam_len).collect();
            SaliencyMap {
                values: v,
                class_id: m.class_id,
                source: m.source,
                raw_cam,
                predicted: m.predicted,
                confidence,
                has_positive_evidence: m.has_positive_evidence,
            }
        })
        .collect();
    Ok(SaliencyStack { class_id: header.class_id, dataset_id: header.dataset_id, rows })
}

pub fn write_stack<T: Scalar>(stack: &SaliencyStack<T>, path: &Path) -> Result<()> {
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_stack_to(stack, &mut w)?;
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn read_stack<T: Scalar>(path: &Path) -> Result<SaliencyStack<T>> {
    let run = || -> Result<SaliencyStack<T>> { read_stack_from(&mut std::io::BufReader::new(File::open(path)?)) };
    run().map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::sample;
    use super::super::{aggregate, equalize_and_msc, explain_all};
    use super::*;
    use crate::model::CnnModel;

    fn stack() -> SaliencyStack<f64> {
        let s: Vec<_> = (0..5).map(|i| sample(i, 24, 0.0, 0.0, "ds", &format!("s{i}"))).collect();
        let st = aggregate(&s, &CnnModel::new(3), "ds", 1, false).unwrap();
        assert_eq!(st.len(), 5);
        st
    }

    #[test]
    fn stack_round_trip_is_exact() {
        let st = stack();
        let mut buf = vec![];
        write_stack_to(&st, &mut buf).unwrap();
        let back: SaliencyStack<f64> = read_stack_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, st);
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_stack_from::<f64, _>(&mut &cut[..]), Err(Error::Truncated { .. })));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_stack_from::<f64, _>(&mut bad.as_slice()), Err(Error::MagicMismatch { .. })));
    }

    #[test]
    fn msc_csv_round_trip_is_exact() {
        let a = stack();
        let mut b = stack();
        b.dataset_id = "other".into();
        b.rows.truncate(3);
        let (msc, _) = equalize_and_msc(&[a, b]).unwrap();
        let freqs: Vec<f64> = (0..24).map(|i| 100.0 * 1.1f64.powi(i)).collect();
        let mut buf = vec![];
        write_msc_csv(&msc, &freqs, &mut buf).unwrap();
        let (f, back) = read_msc_csv(buf.as_slice()).unwrap();
        assert_eq!(f, freqs);
        assert_eq!(back, msc);
    }

    #[test]
    fn saliency_csv_layout() {
        let s: Vec<_> = (0..3).map(|i| sample(i, 16, 0.0, 0.0, "ds", "subj")).collect();
        let refs: Vec<_> = s.iter().collect();
        let maps = explain_all(&CnnModel::new(1), &refs, None).unwrap();
        let freqs: Vec<f64> = (0..16).map(|i| 500.0 * (i + 1) as f64).collect();
        let mut buf = vec![];
        write_saliency_csv(&maps, &freqs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("subject_id,dataset_id,direction_index,label,class_id,predicted,confidence,500,1000"));
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 7 + 16);
        for (c, v) in cells[7..].iter().zip(&maps[0].values) {
            assert_eq!(c.parse::<f64>().unwrap(), *v);
        }
        assert!(write_saliency_csv(&maps, &freqs[1..], Vec::new()).is_err());
    }
}

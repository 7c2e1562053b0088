//! Classification metrics, confusion matrices and cross-dataset summaries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::coords::ElevationClass;
use crate::error::{Error, Result};
use crate::model::{predict_set, CnnModel, LabeledSet, N_CLASSES};
use crate::scalar::Scalar;

/// Per-class and macro-averaged precision, recall and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: [f64; N_CLASSES],
    pub recall: [f64; N_CLASSES],
    pub f1: [f64; N_CLASSES],
    pub support: [usize; N_CLASSES],
    /// Classes averaged into the macro scores.
    pub label_space: Vec<ElevationClass>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n: usize,
}

fn check_pairs(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch { what: "predictions/labels", left: preds.len(), right: labels.len() });
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if let Some(&c) = preds.iter().chain(labels).find(|&&c| c >= N_CLASSES) {
        return Err(Error::ClassOutOfRange(c));
    }
    Ok(())
}

/// Classes that occur in `labels`, in class order.
pub fn present_classes(labels: &[usize]) -> Vec<ElevationClass> {
    ElevationClass::ALL.into_iter().filter(|c| labels.contains(&c.index())).collect()
}

/// Metrics with the macro average taken over the classes present in `labels`.
pub fn metrics(preds: &[usize], labels: &[usize]) -> Result<ClassMetrics> {
    metrics_with_space(preds, labels, &present_classes(labels))
}

/// Metrics with an explicit label space. Classes in the space but absent
/// from `labels` enter the macro average with F1 = 0.
pub fn metrics_with_space(preds: &[usize], labels: &[usize], space: &[ElevationClass]) -> Result<ClassMetrics> {
    check_pairs(preds, labels)?;
    if space.is_empty() {
        return Err(Error::Empty("label space"));
    }
    let (mut tp, mut fp, mut fn_) = ([0usize; N_CLASSES], [0usize; N_CLASSES], [0usize; N_CLASSES]);
    for (&p, &y) in preds.iter().zip(labels) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut m = ClassMetrics {
        precision: [0.0; N_CLASSES],
        recall: [0.0; N_CLASSES],
        f1: [0.0; N_CLASSES],
        support: [0; N_CLASSES],
        label_space: space.to_vec(),
        macro_precision: 0.0,
        macro_recall: 0.0,
        macro_f1: 0.0,
        accuracy: ratio(tp.iter().sum(), preds.len()),
        n: preds.len(),
    };
    for c in 0..N_CLASSES {
        let (p, r) = (ratio(tp[c], tp[c] + fp[c]), ratio(tp[c], tp[c] + fn_[c]));
        m.precision[c] = p;
        m.recall[c] = r;
        m.f1[c] = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        m.support[c] = tp[c] + fn_[c];
    }
    let k = space.len() as f64;
    m.macro_precision = space.iter().map(|c| m.precision[c.index()]).sum::<f64>() / k;
    m.macro_recall = space.iter().map(|c| m.recall[c.index()]).sum::<f64>() / k;
    m.macro_f1 = space.iter().map(|c| m.f1[c.index()]).sum::<f64>() / k;
    Ok(m)
}

/// Whether two sectors are neighbours: consecutive on the polar ring
/// FD–FL–FU–UP–BU–BL–BD (closing back to FD), the two lateral sectors with
/// each other, and each lateral sector with the ring sectors on its side of
/// the horizontal plane.
pub fn adjacent(a: ElevationClass, b: ElevationClass) -> bool {
    use ElevationClass::*;
    const RING: [ElevationClass; 7] = [FrontDown, FrontLevel, FrontUp, Up, BackUp, BackLevel, BackDown];
    if a == b {
        return false;
    }
    let ring_pos = |c| RING.iter().position(|&r| r == c);
    match (ring_pos(a), ring_pos(b)) {
        (Some(i), Some(j)) => (i + 1) % 7 == j || (j + 1) % 7 == i,
        _ => {
            let (lat, other) = if a.is_lateral() { (a, b) } else { (b, a) };
            match lat {
                LateralUp => matches!(other, LateralDown | FrontUp | Up | BackUp),
                _ => matches!(other, LateralUp | FrontDown | BackDown),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[label][prediction]`.
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
    /// Rows normalized to sum to 1; empty rows stay 0.
    pub rates: [[f64; N_CLASSES]; N_CLASSES],
    /// Share of errors that land in a neighbouring sector, if any errors.
    pub adjacent_error_fraction: Option<f64>,
}

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    check_pairs(preds, labels)?;
    let mut counts = [[0usize; N_CLASSES]; N_CLASSES];
    for (&p, &y) in preds.iter().zip(labels) {
        counts[y][p] += 1;
    }
    let mut rates = [[0.0; N_CLASSES]; N_CLASSES];
    for (r, row) in rates.iter_mut().zip(&counts) {
        let n: usize = row.iter().sum();
        if n > 0 {
            for (v, &c) in r.iter_mut().zip(row) {
                *v = c as f64 / n as f64;
            }
        }
    }
    let (mut errors, mut near) = (0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        if p != y {
            errors += 1;
            near += adjacent(ElevationClass::ALL[y], ElevationClass::ALL[p]) as usize;
        }
    }
    Ok(ConfusionMatrix {
        counts,
        rates,
        adjacent_error_fraction: (errors > 0).then(|| near as f64 / errors as f64),
    })
}

/// Macro-F1 of every model (rows) on every test set (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub f1: Vec<Vec<f64>>,
}

/// Row statistics of the off-diagonal cells, averaged over rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDomain {
    pub best: f64,
    pub median: f64,
    pub average: f64,
    pub worst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSummary {
    /// Mean of the diagonal.
    pub in_domain: f64,
    /// Absent when there is no off-diagonal cell.
    pub cross_domain: Option<OffDomain>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

impl CrossMatrix {
    pub fn new(models: Vec<String>, datasets: Vec<String>, f1: Vec<Vec<f64>>) -> Result<Self> {
        if f1.len() != models.len() || f1.iter().any(|r| r.len() != datasets.len()) {
            return Err(Error::Shape(format!(
                "cross matrix must be {} x {}",
                models.len(),
                datasets.len()
            )));
        }
        if f1.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("F1 values must lie in [0, 1]".into()));
        }
        Ok(Self { models, datasets, f1 })
    }

    /// In-domain mean and off-domain best/median/average/worst. Model `i`
    /// is taken to be trained on dataset `i`, so the matrix must be square.
    pub fn summary(&self) -> Result<CrossSummary> {
        let n = self.models.len();
        if n == 0 || n != self.datasets.len() {
            return Err(Error::Shape(format!("summary needs a square matrix, got {} x {}", n, self.datasets.len())));
        }
        let in_domain = (0..n).map(|i| self.f1[i][i]).sum::<f64>() / n as f64;
        if n == 1 {
            return Ok(CrossSummary { in_domain, cross_domain: None });
        }
        let mut acc = [0.0; 4];
        for (i, row) in self.f1.iter().enumerate() {
            let mut off: Vec<f64> = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
            off.sort_by(f64::total_cmp);
            acc[0] += off[off.len() - 1];
            acc[1] += median(&off);
            acc[2] += off.iter().sum::<f64>() / off.len() as f64;
            acc[3] += off[0];
        }
        let k = n as f64;
        Ok(CrossSummary {
            in_domain,
            cross_domain: Some(OffDomain { best: acc[0] / k, median: acc[1] / k, average: acc[2] / k, worst: acc[3] / k }),
        })
    }

    /// CSV with a `model` column followed by one column per dataset. Values
    /// use the shortest representation that parses back to the same float.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["model".to_string()];
        header.extend(self.datasets.iter().cloned());
        out.write_record(&header)?;
        for (name, row) in self.models.iter().zip(&self.f1) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let datasets: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut models = vec![];
        let mut f1 = vec![];
        for rec in rdr.records() {
            let rec = rec?;
            models.push(rec.get(0).unwrap_or_default().to_string());
            f1.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("{v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(models, datasets, f1)
    }
}

/// A named test set and the classes its dataset can contain.
#[derive(Debug, Clone)]
pub struct TestSet<T> {
    pub name: String,
    pub set: LabeledSet<T>,
    pub label_space: Vec<ElevationClass>,
    /// Preprocessing key-value text the set was produced with.
    pub preproc: Option<String>,
}

/// Predictions of `model` on `test`, after checking the preprocessing matches.
pub fn predict_checked<T: Scalar>(model: &CnnModel<T>, test: &TestSet<T>) -> Result<Vec<usize>> {
    if let (Some(m), Some(t)) = (&model.meta.preproc, &test.preproc) {
        if m != t {
            return Err(Error::Config(format!(
                "model was trained on different preprocessing than test set {}",
                test.name
            )));
        }
    }
    Ok(predict_set(model, &test.set)?.into_iter().map(|(c, _)| c).collect())
}

/// Evaluates every model on every test set.
pub fn cross_matrix<T: Scalar>(models: &[(String, &CnnModel<T>)], tests: &[TestSet<T>]) -> Result<CrossMatrix> {
    let mut f1 = Vec::with_capacity(models.len());
    for (_, m) in models {
        let mut row = Vec::with_capacity(tests.len());
        for t in tests {
            let preds = predict_checked(m, t)?;
            row.push(metrics_with_space(&preds, t.set.labels(), &t.label_space)?.macro_f1);
        }
        f1.push(row);
    }
    CrossMatrix::new(
        models.iter().map(|(n, _)| n.clone()).collect(),
        tests.iter().map(|t| t.name.clone()).collect(),
        f1,
    )
}

pub fn write_metrics_csv<W: Write>(m: &ClassMetrics, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "precision", "recall", "f1", "support", "in_label_space"])?;
    for c in ElevationClass::ALL {
        let i = c.index();
        out.write_record([
            c.abbrev().to_string(),
            m.precision[i].to_string(),
            m.recall[i].to_string(),
            m.f1[i].to_string(),
            m.support[i].to_string(),
            m.label_space.contains(&c).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_confusion_csv<W: Write>(c: &ConfusionMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["label".to_string()];
    header.extend(ElevationClass::ALL.iter().map(|c| c.abbrev().to_string()));
    out.write_record(&header)?;
    for (cls, row) in ElevationClass::ALL.iter().zip(&c.counts) {
        let mut rec = vec![cls.abbrev().to_string()];
        rec.extend(row.iter().map(usize::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ElevationClass::*;

    #[test]
    fn perfect_predictions() {
        let y = vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 4];
        let m = metrics(&y, &y).unwrap();
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert!(m.f1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_labels() {
        // 9 classes, 2 samples each, always predicting class 3.
        let labels: Vec<usize> = (0..18).map(|i| i / 2).collect();
        let preds = vec![3; 18];
        let m = metrics(&preds, &labels).unwrap();
        assert_eq!(m.recall[3], 1.0);
        assert!((m.precision[3] - 2.0 / 18.0).abs() < 1e-15);
        // F1 of class 3 = 2pr/(p+r) = 2*(1/9)/(10/9) = 0.2; others 0.
        assert!((m.macro_f1 - 0.2 / 9.0).abs() < 1e-15);
        for c in (0..9).filter(|&c| c != 3) {
            assert_eq!(m.recall[c], 0.0);
        }
    }

    #[test]
    fn inverted_two_class_predictions() {
        let labels = vec![1, 1, 5, 5];
        let preds = vec![5, 5, 1, 1];
        let m = metrics(&preds, &labels).unwrap();
        assert_eq!(m.label_space, vec![FrontLevel, BackLevel]);
        assert_eq!(m.macro_f1, 0.0);
    }

    #[test]
    fn explicit_space_counts_absent_classes() {
        let labels = vec![1, 1];
        let m = metrics_with_space(&labels, &labels, &[FrontLevel, FrontUp]).unwrap();
        assert_eq!(m.macro_f1, 0.5);
    }

    #[test]
    fn input_errors() {
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1], &[1, 2]).is_err());
        assert!(matches!(metrics(&[9], &[1]), Err(Error::ClassOutOfRange(9))));
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn adjacency_table() {
        let of = |c| ElevationClass::ALL.into_iter().filter(|&o| adjacent(c, o)).collect::<Vec<_>>();
        assert_eq!(of(FrontLevel), vec![FrontDown, FrontUp]);
        assert_eq!(of(FrontDown), vec![FrontLevel, BackDown, LateralDown]);
        assert_eq!(of(LateralUp), vec![FrontUp, Up, BackUp, LateralDown]);
        for a in ElevationClass::ALL {
            for b in ElevationClass::ALL {
                assert_eq!(adjacent(a, b), adjacent(b, a));
            }
        }
    }

    #[test]
    fn confusion_identity_and_adjacency() {
        let y: Vec<usize> = (0..9).collect();
        let c = confusion(&y, &y).unwrap();
        for i in 0..9 {
            assert_eq!(c.counts[i][i], 1);
            assert_eq!(c.rates[i][i], 1.0);
        }
        assert_eq!(c.adjacent_error_fraction, None);
        let c = confusion(&[FrontUp.index(), BackLevel.index()], &[FrontLevel.index(), FrontLevel.index()]).unwrap();
        assert_eq!(c.adjacent_error_fraction, Some(0.5));
    }

    #[test]
    fn uniform_random_rows_are_flat() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 90_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 9).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..9)).collect();
        let c = confusion(&preds, &labels).unwrap();
        for row in &c.rates {
            for &v in row {
                assert!((v - 1.0 / 9.0).abs() < 0.015);
            }
        }
    }

    #[test]
    fn summary_reduction() {
        let m = CrossMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.9, 0.5, 0.3], vec![0.4, 0.8, 0.6], vec![0.2, 0.1, 0.7]],
        )
        .unwrap();
        let s = m.summary().unwrap();
        assert!((s.in_domain - 0.8).abs() < 1e-15);
        let off = s.cross_domain.unwrap();
        assert!((off.best - (0.5 + 0.6 + 0.2) / 3.0).abs() < 1e-15);
        assert!((off.worst - (0.3 + 0.4 + 0.1) / 3.0).abs() < 1e-15);
        assert!((off.median - (0.4 + 0.5 + 0.15) / 3.0).abs() < 1e-15);
        let single = CrossMatrix::new(vec!["a".into()], vec!["a".into()], vec![vec![0.7]]).unwrap();
        assert_eq!(single.summary().unwrap().cross_domain, None);
    }

    proptest! {
        #[test]
        fn metric_bounds_and_harmonic_mean(pairs in proptest::collection::vec((0usize..9, 0usize..9), 1..200)) {
            let (preds, labels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = metrics(&preds, &labels).unwrap();
            for c in 0..9 {
                let (p, r, f) = (m.precision[c], m.recall[c], m.f1[c]);
                prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&f));
                let h = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                prop_assert_eq!(f, h);
            }
            let c = confusion(&preds, &labels).unwrap();
            prop_assert_eq!(c.counts.iter().flatten().sum::<usize>(), preds.len());
            for row in &c.rates {
                let s: f64 = row.iter().sum();
                prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn summary_reproduces_from_csv(vals in proptest::collection::vec(0.0f64..=1.0, 16)) {
            let names: Vec<String> = (0..4).map(|i| format!("d{i}")).collect();
            let m = CrossMatrix::new(names.clone(), names, vals.chunks(4).map(<[f64]>::to_vec).collect()).unwrap();
            let mut buf = vec![];
            m.write_csv(&mut buf).unwrap();
            let back = CrossMatrix::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &m);
            let (a, b) = (m.summary().unwrap(), back.summary().unwrap());
            prop_assert_eq!(a.in_domain.to_bits(), b.in_domain.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}

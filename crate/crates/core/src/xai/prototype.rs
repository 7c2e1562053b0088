use nalgebra::{DMatrix, SymmetricEigen};

use crate::dsp::HrtfSample;
use crate::error::{Error, Result};
use crate::model::CnnModel;
use crate::scalar::{gemm, MatRef, Scalar};

use super::{SaliencyMap, SampleRef};

/// Principal components of a sample cloud, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors as rows, aligned with `eigenvalues`. Each is signed
    /// so that its largest-magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
}

impl Pca {
    /// Smallest number of components whose cumulative share of the total
    /// variance reaches `target`. Zero for a cloud without spread.
    pub fn components_for(&self, target: f64) -> usize {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let scale: f64 = self.mean.iter().map(|v| v * v).sum::<f64>() + 1.0;
        if total <= 1e-24 * scale {
            return 0;
        }
        let mut acc = 0.0;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            acc += v.max(0.0);
            if acc >= target * total {
                return i + 1;
            }
        }
        self.eigenvalues.len()
    }

    pub fn explained(&self, d: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues[..d].iter().map(|v| v.max(0.0)).sum::<f64>() / total
    }

    /// Coordinates of `x` on the first `d` components.
    pub fn project(&self, x: &[f64], d: usize) -> Vec<f64> {
        self.components[..d]
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((a, v), m)| a * (v - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &z) in self.components.iter().zip(coords) {
            for (o, &a) in out.iter_mut().zip(c) {
                *o += z * a;
            }
        }
        out
    }
}

/// Covariance PCA of the rows of `rows` (each of equal length).
pub fn pca(rows: &[Vec<f64>]) -> Result<Pca> {
    let n = rows.len();
    let dim = rows.first().ok_or(Error::Empty("PCA input"))?.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("PCA rows differ in length".into()));
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = Vec::with_capacity(n * dim);
    for r in rows {
        centered.extend(r.iter().zip(&mean).map(|(v, m)| v - m));
    }
    let mut cov = vec![0.0; dim * dim];
    let x = MatRef::new(&centered, n, dim);
    gemm(x.t(), x, 0.0, &mut cov);
    let denom = (n.max(2) - 1) as f64;
    cov.iter_mut().for_each(|v| *v /= denom);
    // Symmetrize away rounding so the eigen solver sees an exact symmetric matrix.
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (cov[i * dim + j] + cov[j * dim + i]);
            cov[i * dim + j] = s;
            cov[j * dim + i] = s;
        }
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &cov));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let components = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v.iter().enumerate().fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(Pca { mean, eigenvalues, components })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeHrtf<T> {
    pub class_id: usize,
    pub ipsi: Vec<T>,
    pub contra: Vec<T>,
    /// Saliency of the prototype for its predicted class.
    pub saliency: SaliencyMap<T>,
    /// Principal components kept.
    pub components: usize,
    /// Variance share those components explain.
    pub variance_explained: f64,
    pub variance_target: f64,
    pub n_samples: usize,
}

impl<T: Scalar> PrototypeHrtf<T> {
    pub fn to_input(&self) -> Vec<T> {
        let mut v = self.ipsi.clone();
        v.extend_from_slice(&self.contra);
        v
    }
}

/// PCA-smoothed class centroid, forwarded through `model` for its saliency.
///
/// Each sample is flattened to ipsi followed by contra. The centroid is
/// projected onto the fewest components explaining `variance_kept` of the
/// variance and reconstructed. Because the PCA is centred on that same
/// centroid, the reconstruction equals the class mean up to rounding.
pub fn prototype<T: Scalar>(samples: &[&HrtfSample<T>], model: &CnnModel<T>, variance_kept: f64) -> Result<PrototypeHrtf<T>> {
    let first = samples.first().ok_or(Error::Empty("prototype samples"))?;
    if !(variance_kept > 0.0 && variance_kept <= 1.0) {
        return Err(Error::InvalidArgument(format!("variance_kept {variance_kept} must lie in (0, 1]")));
    }
    let class_id = first.label();
    if samples.iter().any(|s| s.label() != class_id) {
        return Err(Error::InvalidArgument("prototype samples span several classes".into()));
    }
    let bins = first.bins();
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.to_input().iter().map(|v| v.f64()).collect()).collect();
    let identical = rows.iter().all(|r| r == &rows[0]);
    let (flat, d, explained) = if identical {
        (rows[0].clone(), 0, 1.0)
    } else {
        let p = pca(&rows)?;
        let d = p.components_for(variance_kept);
        let centroid = p.mean.clone();
        (p.reconstruct(&p.project(&centroid, d)), d, p.explained(d))
    };
    let input: Vec<T> = flat.iter().map(|&v| T::of(v)).collect();
    let trace = model.forward(&input)?;
    let source = SampleRef {
        subject_id: "prototype".into(),
        dataset_id: first.dataset_id.clone(),
        direction_index: 0,
        label: class_id,
    };
    let saliency = SaliencyMap::from_trace(&trace, model, None, bins, source)?;
    Ok(PrototypeHrtf {
        class_id,
        ipsi: input[..bins].to_vec(),
        contra: input[bins..].to_vec(),
        saliency,
        components: d,
        variance_explained: explained,
        variance_target: variance_kept,
        n_samples: samples.len(),
    })
}

/// Index of the sample closest to `target` (ipsi then contra) in Euclidean
/// distance; ties go to the lowest index.
pub fn nearest_sample<T: Scalar>(samples: &[&HrtfSample<T>], target: &[T]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::Empty("candidate samples"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, s) in samples.iter().enumerate() {
        let x = s.to_input();
        if x.len() != target.len() {
            return Err(Error::LengthMismatch { what: "sample/prototype", left: x.len(), right: target.len() });
        }
        let d: f64 = x.iter().zip(target).map(|(a, b)| (a.f64() - b.f64()).powi(2)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

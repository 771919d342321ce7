use super::mvpa::{mvpa_run, LabeledFeatures, MvpaOptions, MvpaResult};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Pearson correlation between the columns of a `T × K` weight matrix.
/// Constant columns correlate 0 with everything, themselves included.
pub fn fc_matrix(w: &Tensor) -> Result<Tensor> {
    if w.shape().len() != 2 {
        return Err(Error::dim("fc_matrix", format!("expected a matrix, got {:?}", w.shape())));
    }
    let (t, k) = (w.rows(), w.cols());
    if t < 2 {
        return Err(Error::contract(format!("correlation needs T >= 2, got {t}")));
    }
    let means = w.col_means();
    let constant: Vec<bool> = (0..k).map(|j| (1..t).all(|i| w.at(i, j) == w.at(0, j))).collect();
    let mut cov = vec![0.0; k * k];
    for i in 0..t {
        let r = w.row(i);
        for a in 0..k {
            let da = r[a] - means[a];
            for b in a..k {
                cov[a * k + b] += da * (r[b] - means[b]);
            }
        }
    }
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let v = if constant[a] || constant[b] {
                0.0
            } else if a == b {
                1.0
            } else {
                (cov[a * k + b] / (cov[a * k + a].sqrt() * cov[b * k + b].sqrt())).clamp(-1.0, 1.0)
            };
            out[a * k + b] = v;
            out[b * k + a] = v;
        }
    }
    Tensor::matrix(k, k, out)
}

/// Strict upper triangle, row-major.
pub fn upper_triangle(m: &Tensor) -> Vec<f64> {
    let k = m.rows();
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).map(|(a, b)| m.at(a, b)).collect()
}

/// Classifies trials from their connectivity matrices. Selection is never
/// applied.
pub fn fc_classify(fcs: &[Tensor], labels: &[usize], groups: &[usize], opts: &MvpaOptions) -> Result<MvpaResult> {
    if let Some(m) = fcs.iter().find(|m| m.shape() != fcs[0].shape()) {
        return Err(Error::dim("fc_classify", format!("{:?} vs {:?}", m.shape(), fcs[0].shape())));
    }
    let features = fcs.iter().map(upper_triangle).collect();
    let data = LabeledFeatures::new(features, labels.to_vec(), groups.to_vec())?;
    mvpa_run(&data, &MvpaOptions { select: None, ..*opts })
}

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::StudyDataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Two-component PCA of time-averaged trials.
pub fn pca_timeavg_embed(dataset: &StudyDataset) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = dataset.trials.iter().map(|t| t.time_average()).collect();
    pca_embed(&rows, 2)
}

/// Projects mean-centered `rows` onto their top `dims` principal axes, using
/// the `N × N` Gram matrix. Each axis is signed so its largest-magnitude
/// coordinate is positive; axes beyond the data's rank are zero.
pub fn pca_embed(rows: &[Vec<f64>], dims: usize) -> Result<Tensor> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::contract(format!("PCA needs at least 2 trials, got {n}")));
    }
    let v = rows[0].len();
    if rows.iter().any(|r| r.len() != v) {
        return Err(Error::dim("pca", "rows have different lengths"));
    }
    let mut mean = vec![0.0; v];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * n as f64 * f64::EPSILON * 16.0;

    let mut out = vec![0.0; n * dims];
    for (axis, &j) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[j];
        if lambda <= tol {
            continue;
        }
        let col: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, j)] * lambda.sqrt()).collect();
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() * (1.0 + 1e-12) {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[i * dims + axis] = sign * col[i];
        }
    }
    Tensor::matrix(n, dims, out)
}

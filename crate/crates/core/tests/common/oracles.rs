//! Brute-force references for the analysis and linear-algebra routines.

use ntfa::analysis::{anova_f_select, auc, fc_matrix};
use ntfa::baselines::pca_timeavg_embed;
use ntfa::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use ntfa::diffcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Vec<Vec<f64>> {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

/// Largest absolute difference from the triple loop.
pub fn matmul_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, n) = (rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..8));
    let (a, b) = (random_matrix(&mut rng, m, k), random_matrix(&mut rng, k, n));
    let c = tensor(&a).matmul(&tensor(&b)).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for r in 0..k {
                s += a[i][r] * b[r][j];
            }
            worst = worst.max((s - c.at(i, j)).abs());
        }
    }
    worst
}

/// Absolute difference from `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` over all pairs.
/// Scores are rounded to create ties.
pub fn auc_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..40);
    let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(-1.0..1.0f64) * 5.0).round() / 5.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    labels[0] = true;
    labels[1] = false;
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (auc(&scores, &labels).unwrap() - wins / pairs).abs()
}

/// Absolute difference from `cov / (σ σ)` computed column pair by pair.
pub fn fc_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, k) = (rng.random_range(2..30), rng.random_range(1..6));
    let w = random_matrix(&mut rng, t, k);
    let fc = fc_matrix(&tensor(&w)).unwrap();
    let col = |j: usize| -> Vec<f64> { w.iter().map(|r| r[j]).collect() };
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let (x, y) = (col(a), col(b));
            let mx = x.iter().sum::<f64>() / t as f64;
            let my = y.iter().sum::<f64>() / t as f64;
            let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum();
            let sx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum::<f64>().sqrt();
            let sy: f64 = y.iter().map(|q| (q - my).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((cov / (sx * sy) - fc.at(a, b)).abs());
        }
    }
    worst
}

/// Whether the selection equals a sort of textbook F statistics.
pub fn anova_instance(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..5);
    let per = rng.random_range(2..6);
    let cols = rng.random_range(1..30);
    let labels: Vec<usize> = (0..classes * per).map(|i| i % classes).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| (0..cols).map(|j| rng.random_range(-1.0..1.0) + if j % 3 == 0 { c as f64 * 0.3 } else { 0.0 }).collect())
        .collect();
    let m = rng.random_range(1..cols + 3);
    let n = rows.len() as f64;
    let f: Vec<f64> = (0..cols)
        .map(|j| {
            let grand = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let mut ssb = 0.0;
            let mut ssw = 0.0;
            for c in 0..classes {
                let xs: Vec<f64> = rows.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(r, _)| r[j]).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                ssb += xs.len() as f64 * (mean - grand).powi(2);
                ssw += xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
            (ssb / (classes - 1) as f64) / (ssw / (n - classes as f64))
        })
        .collect();
    let mut expected: Vec<usize> = (0..cols).collect();
    expected.sort_by(|&a, &b| f[b].partial_cmp(&f[a]).unwrap().then(a.cmp(&b)));
    expected.truncate(m.min(cols));
    anova_f_select(&rows, &labels, m).unwrap() == expected
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// eigenvalues and eigenvectors as columns.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Largest coordinate difference, up to per-axis sign, from projecting the
/// centered time averages onto the top eigenvectors of the `V × V` scatter
/// matrix.
pub fn pca_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, v, t) = (10, 50, rng.random_range(1..4));
    let grid = VoxelGrid::new(Tensor::zeros(&[v, 3])).unwrap();
    let trials: Vec<Trial> = (0..n)
        .map(|i| {
            let data = random_matrix(&mut rng, t, v).into_iter().flatten().map(|x| x * (1.0 + (i % 3) as f64)).collect();
            Trial::new(0, 0, 0, BlockType::Task, Tensor::matrix(t, v, data).unwrap())
        })
        .collect();
    let avg: Vec<Vec<f64>> = trials
        .iter()
        .map(|tr| (0..v).map(|j| (0..t).map(|r| tr.data.at(r, j)).sum::<f64>() / t as f64).collect())
        .collect();
    let mean: Vec<f64> = (0..v).map(|j| avg.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x: Vec<Vec<f64>> = avg.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let scatter: Vec<Vec<f64>> = (0..v)
        .map(|a| (0..v).map(|b| x.iter().map(|r| r[a] * r[b]).sum()).collect())
        .collect();
    let (vals, vecs) = jacobi_eigen(scatter);
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());

    let ds = StudyDataset::new(1, 1, grid, trials).unwrap();
    let got = pca_timeavg_embed(&ds).unwrap();
    let mut worst: f64 = 0.0;
    for (axis, &e) in order.iter().take(2).enumerate() {
        let proj: Vec<f64> = x.iter().map(|r| r.iter().enumerate().map(|(j, a)| a * vecs[j][e]).sum()).collect();
        let plus = (0..n).map(|i| (proj[i] - got.at(i, axis)).abs()).fold(0.0, f64::max);
        let minus = (0..n).map(|i| (proj[i] + got.at(i, axis)).abs()).fold(0.0, f64::max);
        worst = worst.max(plus.min(minus));
    }
    worst
}

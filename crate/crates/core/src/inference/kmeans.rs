use crate::data::StudyDataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 100;
/// Floor on the mean squared within-cluster distance before taking its log.
const MIN_SQUARED_SPREAD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `K × 3`
    pub centers: Tensor,
    pub log_widths: Vec<f64>,
    pub assignments: Vec<usize>,
}

/// Activity-weighted K-means over voxel coordinates; weights are the mean
/// absolute signal of every voxel across trials and time points.
pub fn init_kmeans(dataset: &StudyDataset, k: usize) -> Result<(Tensor, Vec<f64>)> {
    let weights = dataset.mean_abs_activity();
    let r = weighted_kmeans(dataset.grid.coords(), &weights, k)?;
    Ok((r.centers, r.log_widths))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Lloyd's algorithm on `points (n × 3)` with non-negative `weights`.
///
/// Seeding is deterministic: the heaviest point first, then repeatedly the
/// point maximizing `w · d²` to its nearest chosen center. All-zero weights
/// are treated as uniform.
pub fn weighted_kmeans(points: &Tensor, weights: &[f64], k: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::contract("K-means needs K >= 1"));
    }
    if k > n {
        return Err(Error::contract(format!("K={k} exceeds the {n} voxels")));
    }
    if weights.len() != n || points.cols() != 3 {
        return Err(Error::dim(
            "kmeans",
            format!("{} weights for points {:?}", weights.len(), points.shape()),
        ));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::contract("K-means weights must be finite and non-negative"));
    }
    let uniform;
    let weights = if weights.iter().all(|&w| w == 0.0) {
        uniform = vec![1.0; n];
        &uniform[..]
    } else {
        weights
    };

    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(k);
    let first = argmax(weights.iter().copied());
    centers.push(point(points, first));
    let mut nearest: Vec<f64> = (0..n).map(|v| sq_dist(points.row(v), &centers[0])).collect();
    while centers.len() < k {
        let next = argmax((0..n).map(|v| weights[v] * nearest[v]));
        let c = point(points, next);
        for (v, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(v), &c));
        }
        centers.push(c);
    }

    let mut assignments = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let changed = assign(points, &centers, &mut assignments);
        let reseeded = update(points, weights, &mut centers, &assignments);
        if !changed && !reseeded {
            break;
        }
    }
    assign(points, &centers, &mut assignments);

    let mut spread = vec![(0.0, 0.0, 0usize, 0.0); k];
    for v in 0..n {
        let c = assignments[v];
        let d = sq_dist(points.row(v), &centers[c]);
        let s = &mut spread[c];
        s.0 += weights[v] * d;
        s.1 += weights[v];
        s.2 += 1;
        s.3 += d;
    }
    let log_widths = spread
        .iter()
        .map(|&(wd, w, count, d)| {
            let msd = if w > 0.0 { wd / w } else { d / count.max(1) as f64 };
            msd.max(MIN_SQUARED_SPREAD).ln()
        })
        .collect();
    Ok(KMeansResult {
        centers: Tensor::matrix(k, 3, centers.iter().flatten().copied().collect())?,
        log_widths,
        assignments,
    })
}

fn point(points: &Tensor, v: usize) -> [f64; 3] {
    let r = points.row(v);
    [r[0], r[1], r[2]]
}

fn assign(points: &Tensor, centers: &[[f64; 3]], assignments: &mut [usize]) -> bool {
    let mut changed = false;
    for (v, a) in assignments.iter_mut().enumerate() {
        let p = points.row(v);
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        if *a != best.0 {
            *a = best.0;
            changed = true;
        }
    }
    changed
}

/// Moves centers to their weighted centroids; an empty cluster is re-seeded
/// at the point farthest (by `w · d²`) from its current center.
fn update(points: &Tensor, weights: &[f64], centers: &mut [[f64; 3]], assignments: &[usize]) -> bool {
    let k = centers.len();
    let mut wsum = vec![[0.0; 3]; k];
    let mut wtot = vec![0.0; k];
    let mut sum = vec![[0.0; 3]; k];
    let mut count = vec![0usize; k];
    for (v, &c) in assignments.iter().enumerate() {
        let p = points.row(v);
        for d in 0..3 {
            wsum[c][d] += weights[v] * p[d];
            sum[c][d] += p[d];
        }
        wtot[c] += weights[v];
        count[c] += 1;
    }
    let mut reseeded = false;
    for c in 0..k {
        if count[c] == 0 {
            let far = argmax((0..assignments.len()).map(|v| {
                weights[v] * sq_dist(points.row(v), &centers[assignments[v]])
            }));
            centers[c] = point(points, far);
            reseeded = true;
        } else if wtot[c] > 0.0 {
            centers[c] = wsum[c].map(|s| s / wtot[c]);
        } else {
            centers[c] = sum[c].map(|s| s / count[c] as f64);
        }
    }
    reseeded
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 3]]) -> Tensor {
        Tensor::matrix(rows.len(), 3, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn single_cluster_is_weighted_centroid() {
        let p = pts(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 4.0, 0.0]]);
        let r = weighted_kmeans(&p, &[1.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(r.centers.data(), &[0.5, 2.0, 0.0]);
        // weighted mean squared distance: (1·4.25 + 1·6.25 + 2·4.25) / 4
        assert!((r.log_widths[0] - (19.0f64 / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn two_blobs_get_one_center_each() {
        let mut rows = Vec::new();
        for base in [-10.0, 10.0] {
            for dx in [-1.0, 0.0, 1.0] {
                for dy in [-1.0, 0.0, 1.0] {
                    rows.push([base + dx, dy, 0.0]);
                }
            }
        }
        let r = weighted_kmeans(&pts(&rows), &vec![1.0; rows.len()], 2).unwrap();
        let mut xs = [r.centers.at(0, 0), r.centers.at(1, 0)];
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, [-10.0, 10.0]);
        assert!(r.assignments[..9].iter().all(|&a| a == r.assignments[0]));
        assert!(r.assignments[9..].iter().all(|&a| a != r.assignments[0]));
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let p = pts(&[[0.0; 3], [1.0; 3]]);
        assert!(matches!(weighted_kmeans(&p, &[1.0, 1.0], 3), Err(Error::Contract(_))));
    }

    #[test]
    fn k_equals_n_puts_a_center_on_every_point() {
        let p = pts(&[[0.0; 3], [1.0, 0.0, 0.0], [5.0, 5.0, 5.0]]);
        let r = weighted_kmeans(&p, &[0.0, 0.0, 0.0], 3).unwrap();
        let mut a = r.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2]);
        assert!(r.log_widths.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn equidistant_point_goes_to_lower_index() {
        let p = pts(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let r = weighted_kmeans(&p, &[1.0, 1.0, 0.0], 2).unwrap();
        let lower = r.assignments[0].min(r.assignments[1]);
        assert_eq!(r.assignments[2], lower);
    }
}

use crate::error::{Error, Result};

fn class_index(labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::contract("ANOVA needs at least two classes"));
    }
    let idx = labels.iter().map(|l| classes.binary_search(l).expect("present")).collect();
    Ok((classes, idx))
}

/// One-way ANOVA F statistic of every column.
///
/// A column with no within-class spread gets `+inf` if the class means
/// differ and 0 otherwise.
pub fn anova_f(rows: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    if rows.len() != labels.len() {
        return Err(Error::dim("anova", format!("{} rows, {} labels", rows.len(), labels.len())));
    }
    let (classes, idx) = class_index(labels)?;
    let c = classes.len();
    let mut counts = vec![0usize; c];
    idx.iter().for_each(|&i| counts[i] += 1);
    if let Some(k) = counts.iter().position(|&n| n < 2) {
        return Err(Error::contract(format!("class {} has fewer than two rows", classes[k])));
    }
    let n = rows.len();
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::dim("anova", "rows have different lengths"));
    }
    let mut out = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut sums = vec![0.0; c];
        let mut first = vec![None; c];
        let mut constant = vec![true; c];
        for (r, &ci) in rows.iter().zip(&idx) {
            let x = r[j];
            sums[ci] += x;
            match first[ci] {
                None => first[ci] = Some(x),
                Some(f) if f != x => constant[ci] = false,
                _ => {}
            }
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &k)| s / k as f64).collect();
        let grand = sums.iter().sum::<f64>() / n as f64;
        let ssb: f64 = means.iter().zip(&counts).map(|(m, &k)| k as f64 * (m - grand).powi(2)).sum();
        let f = if constant.iter().all(|&b| b) {
            let distinct = first.iter().any(|f| f != &first[0]);
            if distinct { f64::INFINITY } else { 0.0 }
        } else {
            let ssw: f64 = rows.iter().zip(&idx).map(|(r, &ci)| (r[j] - means[ci]).powi(2)).sum();
            (ssb / (c - 1) as f64) / (ssw / (n - c) as f64)
        };
        out.push(f);
    }
    Ok(out)
}

/// Indices of the `m` columns with the largest F, infinite first, ties to the
/// lower index; `m` is clipped to the column count.
pub fn anova_f_select(rows: &[Vec<f64>], labels: &[usize], m: usize) -> Result<Vec<usize>> {
    let f = anova_f(rows, labels)?;
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    order.truncate(m.min(f.len()));
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_two_by_three() {
        // class 0: 1, 2, 3 (mean 2); class 1: 4, 6, 8 (mean 6); grand 4
        // SSB = 3·4 + 3·4 = 24, SSW = 2 + 8 = 10, F = 24 / (10 / 4) = 9.6
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 6.0, 8.0].iter().map(|&x| vec![x]).collect();
        let f = anova_f(&rows, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((f[0] - 9.6).abs() < 1e-12);
    }

    #[test]
    fn constant_and_separating_columns() {
        let rows = vec![vec![5.0, 0.0, 0.3], vec![5.0, 0.0, 0.1], vec![5.0, 1.0, 0.9], vec![5.0, 1.0, 0.2]];
        let labels = [0, 0, 1, 1];
        let f = anova_f(&rows, &labels).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], f64::INFINITY);
        assert_eq!(anova_f_select(&rows, &labels, 10).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(matches!(anova_f(&rows, &[3, 3]), Err(Error::Contract(_))));
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anova::anova_f_select;
use super::auc::auc;
use super::svm::{linear_svm_train_with, SvmOptions};
use crate::error::{Error, Result};

/// Design matrix for classification: one row per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Run id of each row, used by leave-one-run-out folds.
    pub groups: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, groups: Vec<usize>) -> Result<Self> {
        let n = features.len();
        if labels.len() != n || groups.len() != n {
            return Err(Error::dim(
                "labeled_features",
                format!("{n} rows, {} labels, {} groups", labels.len(), groups.len()),
            ));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(Error::dim("labeled_features", "rows have different lengths"));
            }
        }
        Ok(LabeledFeatures { features, labels, groups })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    LeaveOneRunOut,
    StratifiedKFold(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvpaOptions {
    pub scheme: CvScheme,
    /// Number of ANOVA-selected columns per training fold; `None` keeps all.
    pub select: Option<usize>,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MvpaOptions {
    fn default() -> Self {
        let svm = SvmOptions::default();
        MvpaOptions {
            scheme: CvScheme::StratifiedKFold(3),
            select: None,
            c: svm.c,
            epochs: svm.epochs,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAuc {
    pub class: usize,
    pub fold: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: usize,
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpaResult {
    pub folds: Vec<FoldAuc>,
    pub classes: Vec<ClassSummary>,
    /// Selected columns of each fold; empty without selection.
    pub selections: Vec<Vec<usize>>,
}

impl MvpaResult {
    pub fn class(&self, class: usize) -> Option<&ClassSummary> {
        self.classes.iter().find(|c| c.class == class)
    }

    /// `class,fold,auc` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,fold,auc\n");
        for f in &self.folds {
            s.push_str(&format!("{},{},{}\n", f.class, f.fold, f.auc));
        }
        s
    }
}

/// Train/test row indices of every fold.
pub fn cv_folds(data: &LabeledFeatures, scheme: CvScheme, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = data.len();
    let assignment: Vec<usize>;
    let k;
    match scheme {
        CvScheme::LeaveOneRunOut => {
            let mut runs = data.groups.clone();
            runs.sort_unstable();
            runs.dedup();
            if runs.len() < 2 {
                return Err(Error::contract(format!("leave-one-run-out needs at least 2 runs, got {}", runs.len())));
            }
            k = runs.len();
            assignment = data.groups.iter().map(|g| runs.binary_search(g).expect("present")).collect();
        }
        CvScheme::StratifiedKFold(folds) => {
            if folds < 2 || n < folds {
                return Err(Error::contract(format!("{folds}-fold cross-validation on {n} rows")));
            }
            k = folds;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = vec![0; n];
            let mut next = 0;
            for c in data.classes() {
                let mut rows: Vec<usize> = (0..n).filter(|&i| data.labels[i] == c).collect();
                rows.shuffle(&mut rng);
                for r in rows {
                    a[r] = next % k;
                    next += 1;
                }
            }
            assignment = a;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            (train, test)
        })
        .collect())
}

fn zscore_columns(train: &[&[f64]], rows: &[&[f64]]) -> Vec<Vec<f64>> {
    let d = train.first().map_or(0, |r| r.len());
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for r in train {
        mean.iter_mut().zip(*r).for_each(|(m, x)| *m += x / n);
    }
    let mut sd = vec![0.0; d];
    for r in train {
        sd.iter_mut().zip(*r).zip(&mean).for_each(|((s, x), m)| *s += (x - m).powi(2) / n);
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt());
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

fn fold_seed(master: u64, fold: usize, class: usize) -> u64 {
    master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((fold as u64) << 32 | class as u64)
}

/// Cross-validated one-vs-rest linear classification.
///
/// Inside each fold, optional ANOVA selection and z-scoring use the
/// training rows only. Class/fold pairs whose training or test rows lack
/// one side are skipped.
pub fn mvpa_run(data: &LabeledFeatures, opts: &MvpaOptions) -> Result<MvpaResult> {
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::contract("classification needs at least two classes"));
    }
    let folds = cv_folds(data, opts.scheme, opts.seed)?;
    let per_fold: Vec<Result<(Vec<FoldAuc>, Vec<usize>)>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let train_rows: Vec<&[f64]> = train.iter().map(|&i| data.features[i].as_slice()).collect();
            let selection = match opts.select {
                Some(m) => {
                    let owned: Vec<Vec<f64>> = train_rows.iter().map(|r| r.to_vec()).collect();
                    let labels: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
                    anova_f_select(&owned, &labels, m)?
                }
                None => Vec::new(),
            };
            let pick = |r: &[f64]| -> Vec<f64> {
                if opts.select.is_some() {
                    selection.iter().map(|&j| r[j]).collect()
                } else {
                    r.to_vec()
                }
            };
            let tr: Vec<Vec<f64>> = train_rows.iter().map(|r| pick(r)).collect();
            let te: Vec<Vec<f64>> = test.iter().map(|&i| pick(&data.features[i])).collect();
            let tr_ref: Vec<&[f64]> = tr.iter().map(Vec::as_slice).collect();
            let te_ref: Vec<&[f64]> = te.iter().map(Vec::as_slice).collect();
            let x_train = zscore_columns(&tr_ref, &tr_ref);
            let x_test = zscore_columns(&tr_ref, &te_ref);

            let mut out = Vec::new();
            for &c in &classes {
                let y: Vec<f64> = train.iter().map(|&i| if data.labels[i] == c { 1.0 } else { -1.0 }).collect();
                let positive: Vec<bool> = test.iter().map(|&i| data.labels[i] == c).collect();
                let both = |v: &[bool]| v.iter().any(|&p| p) && v.iter().any(|&p| !p);
                let y_bool: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
                if !both(&y_bool) || !both(&positive) {
                    continue;
                }
                let svm_opts = SvmOptions {
                    c: opts.c,
                    epochs: opts.epochs,
                    seed: fold_seed(opts.seed, f, c),
                };
                let svm = linear_svm_train_with(&x_train, &y, &svm_opts)?;
                let scores: Vec<f64> = x_test.iter().map(|r| svm.decision(r)).collect();
                out.push(FoldAuc {
                    class: c,
                    fold: f,
                    auc: auc(&scores, &positive)?,
                });
            }
            Ok((out, selection))
        })
        .collect();

    let mut all = Vec::new();
    let mut selections = Vec::new();
    for r in per_fold {
        let (a, s) = r?;
        all.extend(a);
        selections.push(s);
    }
    let summaries = classes
        .iter()
        .filter_map(|&c| {
            let v: Vec<f64> = all.iter().filter(|f| f.class == c).map(|f| f.auc).collect();
            if v.is_empty() {
                return None;
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            Some(ClassSummary {
                class: c,
                mean,
                std,
                folds: v.len(),
            })
        })
        .collect();
    Ok(MvpaResult {
        folds: all,
        classes: summaries,
        selections,
    })
}

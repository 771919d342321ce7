//! Classification of trial conditions from features or inferred weights.

mod anova;
mod auc;
mod fc;
mod mvpa;
mod svm;

pub use anova::{anova_f, anova_f_select};
pub use auc::{auc, average_ranks};
pub use fc::{fc_classify, fc_matrix, upper_triangle};
pub use mvpa::{cv_folds, mvpa_run, ClassSummary, CvScheme, FoldAuc, LabeledFeatures, MvpaOptions, MvpaResult};
pub use svm::{linear_svm_train, linear_svm_train_with, LinearSvm, SvmOptions};

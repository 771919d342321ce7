//! Comparison models: hierarchical TFA and time-averaged PCA.

pub mod htfa;
pub mod pca;

pub use htfa::{htfa_bound, htfa_fit, htfa_fit_from, htfa_log_predictive, HtfaFit, HtfaState};
pub use pca::{pca_embed, pca_timeavg_embed};

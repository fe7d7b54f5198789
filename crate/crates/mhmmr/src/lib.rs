//! Unsupervised joint segmentation of multivariate time series with a hidden
//! Markov model whose per-state emissions are polynomial regressions of time
//! (full-covariance multivariate Gaussians around a polynomial mean curve).
//!
//! The model is trained by EM (Baum-Welch): the E-step runs scaled
//! forward-backward smoothing, the M-step performs one weighted polynomial
//! regression per state with the posteriors as weights. Hard segmentations
//! come from Viterbi decoding or per-sample maximum posterior. The crate also
//! ships the flat baselines (k-means, full-covariance GMM, constant-mean
//! Gaussian HMM), label-matched evaluation against ground truth, a synthetic
//! generator that samples the exact generative model, and CSV/model
//! persistence for the command-line front end.

pub mod baselines;
pub mod design;
pub mod em;
pub mod error;
pub mod evaluation;
pub mod generate;
pub mod inference;
pub mod io;
pub mod params;
pub mod series;

pub use baselines::{gmm_fit, hmm_gaussian_fit, kmeans_fit, HardClustering};
pub use design::{
    build_design, build_design_with_norm, predict_mean, weighted_covariance,
    weighted_mv_least_squares, DesignMatrix, TimeNorm,
};
pub use em::{e_step, fit, fit_with_init, init_params, m_step, FitConfig, FitResult, InitStrategy};
pub use error::{MhmmrError, Result};
pub use evaluation::{
    channel_subset, compare_methods, confusion_and_scores, evaluate, match_labels, EvalReport,
    Method,
};
pub use generate::{generate, paper_shaped, preset, separated, GeneratorSpec};
pub use inference::{
    emission_logdensities, forward_backward, max_posterior_decode, viterbi, EmissionTable,
};
pub use params::{DecodeSource, MhmmrParams, PosteriorSet, Segmentation};
pub use series::TimeSeries;

//! Label matching, confusion matrices, accuracy, precision/recall, channel
//! selection, and the side-by-side method comparison.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix as CostMatrix;

use crate::baselines::{gmm_fit, hmm_gaussian_fit, kmeans_fit};
use crate::em::{fit, FitConfig};
use crate::error::{MhmmrError, Result};
use crate::inference::{emission_logdensities, viterbi};
use crate::series::TimeSeries;

/// Matched evaluation of one prediction against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Count matrix after matching: rows are true classes, columns predicted.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    /// Per predicted class: diagonal / column sum (0 for an empty column).
    pub precision: Vec<f64>,
    /// Per true class: diagonal / row sum (0 for an empty row).
    pub recall: Vec<f64>,
    /// The relabeling applied: `matching[p-1]` is the class that predicted
    /// class `p` was mapped to.
    pub matching: Vec<usize>,
}

impl EvalReport {
    pub fn macro_precision(&self) -> f64 {
        mean(&self.precision)
    }

    pub fn macro_recall(&self) -> f64 {
        mean(&self.recall)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max_label(labels: &[usize]) -> usize {
    labels.iter().copied().max().unwrap_or(0)
}

/// Finds the one-to-one relabeling of predicted classes that minimizes the
/// misclassification count, by maximum-weight assignment on the agreement
/// count matrix (padded with zero-count dummies when the class counts
/// differ). Returns the matching and the relabeled prediction.
pub fn match_labels(pred: &[usize], truth: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if pred.len() != truth.len() {
        return Err(MhmmrError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MhmmrError::TooFewSamples { n: 0, min: 1 });
    }
    let k_pred = max_label(pred);
    let k_truth = max_label(truth);
    let size = k_pred.max(k_truth);

    let mut agreement = vec![vec![0i64; size]; size];
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        agreement[p - 1][t - 1] += 1;
    }
    let weights = CostMatrix::from_rows(agreement).expect("square count matrix");
    let (_, assignment) = kuhn_munkres(&weights);

    let matching: Vec<usize> = assignment.iter().map(|&t| t + 1).collect();
    let relabeled: Vec<usize> = pred.iter().map(|&p| matching[p - 1]).collect();
    Ok((matching, relabeled))
}

/// Confusion matrix and scores for an already matched prediction.
pub fn confusion_and_scores(
    matched_pred: &[usize],
    truth: &[usize],
    matching: Vec<usize>,
) -> Result<EvalReport> {
    if matched_pred.len() != truth.len() {
        return Err(MhmmrError::LengthMismatch {
            left: matched_pred.len(),
            right: truth.len(),
        });
    }
    let n = truth.len();
    let size = max_label(matched_pred).max(max_label(truth));
    let mut confusion = vec![vec![0usize; size]; size];
    for (&p, &t) in matched_pred.iter().zip(truth.iter()) {
        confusion[t - 1][p - 1] += 1;
    }
    let correct: usize = (0..size).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / n as f64;

    let mut precision = vec![0.0; size];
    let mut recall = vec![0.0; size];
    for c in 0..size {
        let col_sum: usize = (0..size).map(|r| confusion[r][c]).sum();
        let row_sum: usize = confusion[c].iter().sum();
        if col_sum > 0 {
            precision[c] = confusion[c][c] as f64 / col_sum as f64;
        }
        if row_sum > 0 {
            recall[c] = confusion[c][c] as f64 / row_sum as f64;
        }
    }
    Ok(EvalReport {
        confusion,
        accuracy,
        precision,
        recall,
        matching,
    })
}

/// Matches a raw prediction against ground truth and scores it.
pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<EvalReport> {
    let (matching, relabeled) = match_labels(pred, truth)?;
    confusion_and_scores(&relabeled, truth, matching)
}

/// Returns a series restricted to the requested channels. Each entry of
/// `keep` is either a channel name or a sensor-group prefix: `"chest"`
/// selects every channel named `chest_*`. Selected columns keep their
/// original order; labels are preserved.
pub fn channel_subset(series: &TimeSeries, keep: &[&str]) -> Result<TimeSeries> {
    let names = series.channel_names();
    let mut selected = vec![false; names.len()];
    for request in keep {
        let mut found = false;
        for (idx, name) in names.iter().enumerate() {
            if name == request || name.starts_with(&format!("{request}_")) {
                selected[idx] = true;
                found = true;
            }
        }
        if !found {
            return Err(MhmmrError::UnknownChannel((*request).to_string()));
        }
    }
    let indices: Vec<usize> = (0..names.len()).filter(|&i| selected[i]).collect();
    let values = DMatrix::from_fn(series.len(), indices.len(), |i, j| {
        series.values()[(i, indices[j])]
    });
    TimeSeries::new(
        series.timestamps().to_vec(),
        values,
        indices.iter().map(|&i| names[i].clone()).collect(),
        series.labels().map(|l| l.to_vec()),
    )
}

/// The unsupervised methods that can be compared side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    KMeans,
    Gmm,
    /// Gaussian HMM, i.e. the regression model with p = 0.
    HmmP0,
    Mhmmr,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::KMeans => "kmeans",
            Method::Gmm => "gmm",
            Method::HmmP0 => "hmm_p0",
            Method::Mhmmr => "mhmmr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Method::KMeans),
            "gmm" => Ok(Method::Gmm),
            "hmm_p0" => Ok(Method::HmmP0),
            "mhmmr" => Ok(Method::Mhmmr),
            other => Err(MhmmrError::InvalidConfig(format!(
                "unknown method `{other}` (expected kmeans, gmm, hmm_p0 or mhmmr)"
            ))),
        }
    }
}

/// Runs each requested method on the same labeled series and evaluates every
/// result against the ground truth.
pub fn compare_methods(
    series: &TimeSeries,
    methods: &[Method],
    cfg: &FitConfig,
) -> Result<Vec<(Method, EvalReport)>> {
    let truth = series.labels().ok_or(MhmmrError::MissingLabels)?.to_vec();
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let pred = run_method(series, method, cfg)?;
        let report = evaluate(&pred, &truth)?;
        rows.push((method, report));
    }
    Ok(rows)
}

fn run_method(series: &TimeSeries, method: Method, cfg: &FitConfig) -> Result<Vec<usize>> {
    match method {
        Method::KMeans => {
            Ok(kmeans_fit(series.values(), cfg.k, cfg.seed, 300, 1e-7)?.assignments)
        }
        Method::Gmm => Ok(gmm_fit(series.values(), cfg.k, cfg.seed, 500, 1e-6)?.assignments),
        Method::HmmP0 => {
            let result = hmm_gaussian_fit(series, cfg.k, cfg)?;
            decode_states(series, &result.params)
        }
        Method::Mhmmr => {
            let result = fit(series, cfg)?;
            decode_states(series, &result.params)
        }
    }
}

fn decode_states(series: &TimeSeries, params: &crate::params::MhmmrParams) -> Result<Vec<usize>> {
    let design = crate::design::build_design_with_norm(
        series.timestamps(),
        params.order(),
        params.time_norm(),
    );
    let emis = emission_logdensities(params, series, &design)?;
    Ok(viterbi(params, &emis)?.states().to_vec())
}

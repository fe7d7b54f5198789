//! Model parameters and the probability containers produced by inference.

use nalgebra::{DMatrix, DVector};

use crate::design::TimeNorm;
use crate::error::{MhmmrError, Result};

const PROB_SUM_TOL: f64 = 1e-12;
const TAU_ROW_TOL: f64 = 1e-10;
const XI_MARGINAL_TOL: f64 = 1e-8;

/// Full parameter set of the regression HMM: initial distribution `pi`,
/// transition matrix, one regression coefficient matrix and one covariance
/// per state, plus the time normalization the coefficients were fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct MhmmrParams {
    k: usize,
    p: usize,
    d: usize,
    pi: DVector<f64>,
    trans: DMatrix<f64>,
    regressions: Vec<DMatrix<f64>>,
    covariances: Vec<DMatrix<f64>>,
    time_norm: TimeNorm,
}

impl MhmmrParams {
    pub fn new(
        pi: DVector<f64>,
        trans: DMatrix<f64>,
        regressions: Vec<DMatrix<f64>>,
        covariances: Vec<DMatrix<f64>>,
        time_norm: TimeNorm,
    ) -> Result<Self> {
        let k = pi.len();
        if k == 0 {
            return Err(MhmmrError::InvariantViolation(
                "at least one state is required".into(),
            ));
        }
        if trans.nrows() != k || trans.ncols() != k {
            return Err(MhmmrError::InvariantViolation(format!(
                "transition matrix is {}x{} for {} states",
                trans.nrows(),
                trans.ncols(),
                k
            )));
        }
        if regressions.len() != k || covariances.len() != k {
            return Err(MhmmrError::InvariantViolation(format!(
                "{} regression and {} covariance matrices for {} states",
                regressions.len(),
                covariances.len(),
                k
            )));
        }
        let p = regressions[0].nrows().saturating_sub(1);
        let d = regressions[0].ncols();
        if d == 0 || regressions[0].nrows() == 0 {
            return Err(MhmmrError::InvariantViolation(
                "regression matrices must be (p+1) x d with d >= 1".into(),
            ));
        }
        for (idx, b) in regressions.iter().enumerate() {
            if b.nrows() != p + 1 || b.ncols() != d {
                return Err(MhmmrError::InvariantViolation(format!(
                    "regression matrix of state {} has shape {}x{}, expected {}x{}",
                    idx + 1,
                    b.nrows(),
                    b.ncols(),
                    p + 1,
                    d
                )));
            }
        }

        check_prob_vector(&pi, "pi")?;
        for row in 0..k {
            let sum: f64 = (0..k).map(|col| trans[(row, col)]).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(MhmmrError::InvariantViolation(format!(
                    "transition row {} sums to {sum}, expected 1",
                    row + 1
                )));
            }
            for col in 0..k {
                if trans[(row, col)] < 0.0 || !trans[(row, col)].is_finite() {
                    return Err(MhmmrError::InvariantViolation(format!(
                        "transition entry ({},{}) is {}",
                        row + 1,
                        col + 1,
                        trans[(row, col)]
                    )));
                }
            }
        }
        for (idx, sigma) in covariances.iter().enumerate() {
            if sigma.nrows() != d || sigma.ncols() != d {
                return Err(MhmmrError::InvariantViolation(format!(
                    "covariance of state {} has shape {}x{}, expected {d}x{d}",
                    idx + 1,
                    sigma.nrows(),
                    sigma.ncols()
                )));
            }
            let max_abs = sigma.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let tol = PROB_SUM_TOL * max_abs.max(1.0);
            for i in 0..d {
                for j in 0..i {
                    if (sigma[(i, j)] - sigma[(j, i)]).abs() > tol {
                        return Err(MhmmrError::InvariantViolation(format!(
                            "covariance of state {} is not symmetric at ({},{})",
                            idx + 1,
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
            if sigma.clone().cholesky().is_none() {
                return Err(MhmmrError::InvariantViolation(format!(
                    "covariance of state {} is not positive definite",
                    idx + 1
                )));
            }
        }

        Ok(Self {
            k,
            p,
            d,
            pi,
            trans,
            regressions,
            covariances,
            time_norm,
        })
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    /// Polynomial order of the per-state regressions.
    pub fn order(&self) -> usize {
        self.p
    }

    /// Channel count the model was fitted for.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn trans(&self) -> &DMatrix<f64> {
        &self.trans
    }

    /// Regression coefficients of state `k` (0-based), shape `(p+1) x d`.
    pub fn regression(&self, k: usize) -> &DMatrix<f64> {
        &self.regressions[k]
    }

    pub fn regressions(&self) -> &[DMatrix<f64>] {
        &self.regressions
    }

    /// Covariance of state `k` (0-based), shape `d x d`.
    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn time_norm(&self) -> TimeNorm {
        self.time_norm
    }

    /// Returns a copy with states relabeled by `perm`, where `perm[new] = old`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(MhmmrError::LengthMismatch {
                left: perm.len(),
                right: self.k,
            });
        }
        let pi = DVector::from_fn(self.k, |i, _| self.pi[perm[i]]);
        let trans = DMatrix::from_fn(self.k, self.k, |i, j| self.trans[(perm[i], perm[j])]);
        let regressions = perm.iter().map(|&o| self.regressions[o].clone()).collect();
        let covariances = perm.iter().map(|&o| self.covariances[o].clone()).collect();
        Self::new(pi, trans, regressions, covariances, self.time_norm)
    }
}

fn check_prob_vector(v: &DVector<f64>, name: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(MhmmrError::InvariantViolation(format!(
            "{name} sums to {sum}, expected 1"
        )));
    }
    for (i, &x) in v.iter().enumerate() {
        if x < 0.0 || !x.is_finite() {
            return Err(MhmmrError::InvariantViolation(format!(
                "{name}[{}] is {x}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Smoothed inference output: per-sample state posteriors `tau` (n x K),
/// pairwise posteriors `xi` (one K x K slice per step i = 2..n, indexed
/// `xi[i-2][(prev, cur)]`), and the observed-data log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSet {
    tau: DMatrix<f64>,
    xi: Vec<DMatrix<f64>>,
    loglik: f64,
}

impl PosteriorSet {
    pub fn new(tau: DMatrix<f64>, xi: Vec<DMatrix<f64>>, loglik: f64) -> Result<Self> {
        let n = tau.nrows();
        let k = tau.ncols();
        if n == 0 || k == 0 {
            return Err(MhmmrError::InvariantViolation(
                "posterior matrix must be non-empty".into(),
            ));
        }
        if xi.len() != n - 1 {
            return Err(MhmmrError::InvariantViolation(format!(
                "{} pairwise slices for {} samples",
                xi.len(),
                n
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for s in 0..k {
                let v = tau[(i, s)];
                if !(0.0..=1.0 + TAU_ROW_TOL).contains(&v) {
                    return Err(MhmmrError::InvariantViolation(format!(
                        "tau[{i}][{s}] = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > TAU_ROW_TOL {
                return Err(MhmmrError::InvariantViolation(format!(
                    "tau row {i} sums to {sum}"
                )));
            }
        }
        for (step, slice) in xi.iter().enumerate() {
            if slice.nrows() != k || slice.ncols() != k {
                return Err(MhmmrError::InvariantViolation(format!(
                    "xi slice {step} has shape {}x{}",
                    slice.nrows(),
                    slice.ncols()
                )));
            }
            let total: f64 = slice.iter().sum();
            if (total - 1.0).abs() > TAU_ROW_TOL {
                return Err(MhmmrError::InvariantViolation(format!(
                    "xi slice {step} sums to {total}"
                )));
            }
            // Marginalizing over the previous state must reproduce tau at time i.
            for cur in 0..k {
                let marginal: f64 = (0..k).map(|prev| slice[(prev, cur)]).sum();
                if (marginal - tau[(step + 1, cur)]).abs() > XI_MARGINAL_TOL {
                    return Err(MhmmrError::InvariantViolation(format!(
                        "xi slice {step} marginal {marginal} != tau {}",
                        tau[(step + 1, cur)]
                    )));
                }
            }
        }
        Ok(Self { tau, xi, loglik })
    }

    pub fn len(&self) -> usize {
        self.tau.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.nrows() == 0
    }

    pub fn num_states(&self) -> usize {
        self.tau.ncols()
    }

    /// The n x K matrix of state posteriors.
    pub fn tau(&self) -> &DMatrix<f64> {
        &self.tau
    }

    /// Pairwise posterior `p(z_{i-1} = prev, z_i = cur | Y)` for step `i`
    /// (2-based over samples, so `xi_slice(0)` covers the pair (1, 2)).
    pub fn xi_slice(&self, step: usize) -> &DMatrix<f64> {
        &self.xi[step]
    }

    pub fn xi(&self) -> &[DMatrix<f64>] {
        &self.xi
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }
}

/// How a hard state sequence was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeSource {
    Viterbi,
    MaxPosterior,
}

impl std::fmt::Display for DecodeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeSource::Viterbi => write!(f, "viterbi"),
            DecodeSource::MaxPosterior => write!(f, "max_posterior"),
        }
    }
}

/// A decoded hard label sequence (1-based states) with the posterior
/// probability of the chosen state at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    states: Vec<usize>,
    confidences: Vec<f64>,
    source: DecodeSource,
}

impl Segmentation {
    pub fn new(states: Vec<usize>, confidences: Vec<f64>, source: DecodeSource) -> Result<Self> {
        if states.len() != confidences.len() {
            return Err(MhmmrError::LengthMismatch {
                left: states.len(),
                right: confidences.len(),
            });
        }
        if states.iter().any(|&s| s == 0) {
            return Err(MhmmrError::InvariantViolation(
                "states are 1-based; found state 0".into(),
            ));
        }
        if confidences
            .iter()
            .any(|&c| !(0.0..=1.0 + TAU_ROW_TOL).contains(&c))
        {
            return Err(MhmmrError::InvariantViolation(
                "confidences must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            states,
            confidences,
            source,
        })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn source(&self) -> DecodeSource {
        self.source
    }
}

//! Unsupervised maximum-likelihood estimation via EM (Baum-Welch):
//! initialization, the E and M steps, convergence control, and restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::{build_design, build_design_with_norm, weighted_covariance, weighted_mv_least_squares};
use crate::error::{MhmmrError, Result};
use crate::inference::{emission_logdensities, forward_backward};
use crate::params::{MhmmrParams, PosteriorSet};
use crate::series::TimeSeries;

const PI_SMOOTHING: f64 = 1e-10;

/// How the first parameter estimate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Split the series into K equal contiguous blocks and fit one regime per
    /// block. Strong prior for activity-style data recorded in a fixed order.
    Contiguous,
    /// Draw a random soft assignment and run one M-step on it.
    RandomResponsibilities,
}

/// Training configuration. `K` and `p` are user inputs, not estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub p: usize,
    pub max_iter: usize,
    /// Convergence threshold on the relative log-likelihood improvement.
    pub rel_tol: f64,
    pub n_restarts: usize,
    pub init_strategy: InitStrategy,
    pub seed: u64,
    /// Initial self-transition probability of every state.
    pub self_transition_init: f64,
}

impl FitConfig {
    pub fn new(k: usize, p: usize) -> Self {
        Self {
            k,
            p,
            max_iter: 500,
            rel_tol: 1e-6,
            n_restarts: 1,
            init_strategy: InitStrategy::Contiguous,
            seed: 0,
            self_transition_init: 0.98,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(MhmmrError::InvalidConfig("K must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(MhmmrError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(MhmmrError::InvalidConfig("rel_tol must be positive".into()));
        }
        if !(self.self_transition_init > 0.0 && self.self_transition_init < 1.0) {
            return Err(MhmmrError::InvalidConfig(
                "self_transition_init must lie strictly between 0 and 1".into(),
            ));
        }
        if self.n_restarts == 0 {
            return Err(MhmmrError::InvalidConfig(
                "n_restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a fit: the winning parameters, the per-iteration log-likelihood
/// trace, and bookkeeping about convergence and restarts.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MhmmrParams,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Set when some state ended with total responsibility below p+2, i.e.
    /// effectively fewer points than regression coefficients.
    pub low_support_warning: bool,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Builds the initial parameter estimate for the given strategy and seed.
pub fn init_params(series: &TimeSeries, cfg: &FitConfig) -> Result<MhmmrParams> {
    cfg.validate()?;
    let n = series.len();
    if n < cfg.k {
        return Err(MhmmrError::TooFewSamples { n, min: cfg.k });
    }
    match cfg.init_strategy {
        InitStrategy::Contiguous => init_contiguous(series, cfg),
        InitStrategy::RandomResponsibilities => init_random_responsibilities(series, cfg),
    }
}

fn initial_chain(cfg: &FitConfig) -> (DVector<f64>, DMatrix<f64>) {
    let k = cfg.k;
    let mut pi = DVector::zeros(k);
    pi[0] = 1.0;
    pi.add_scalar_mut(1e-3);
    let total: f64 = pi.iter().sum();
    pi /= total;

    let trans = if k == 1 {
        DMatrix::from_element(1, 1, 1.0)
    } else {
        let off = (1.0 - cfg.self_transition_init) / (k - 1) as f64;
        DMatrix::from_fn(k, k, |i, j| if i == j { cfg.self_transition_init } else { off })
    };
    (pi, trans)
}

fn init_contiguous(series: &TimeSeries, cfg: &FitConfig) -> Result<MhmmrParams> {
    let n = series.len();
    let k = cfg.k;
    let design = build_design(series.timestamps(), cfg.p);
    let mut regressions = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for state in 0..k {
        let start = state * n / k;
        let end = if state + 1 == k { n } else { (state + 1) * n / k };
        let mut w = vec![0.0; n];
        w[start..end].iter_mut().for_each(|v| *v = 1.0);
        let b = weighted_mv_least_squares(design.matrix(), series.values(), &w)?;
        let sigma = weighted_covariance(design.matrix(), series.values(), &b, &w)?;
        regressions.push(b);
        covariances.push(sigma);
    }
    let (pi, trans) = initial_chain(cfg);
    MhmmrParams::new(pi, trans, regressions, covariances, design.norm())
}

fn init_random_responsibilities(series: &TimeSeries, cfg: &FitConfig) -> Result<MhmmrParams> {
    let n = series.len();
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tau = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() + 1e-3);
    for i in 0..n {
        let row_sum: f64 = (0..k).map(|s| tau[(i, s)]).sum();
        for s in 0..k {
            tau[(i, s)] /= row_sum;
        }
    }
    // Independence products for the pairwise posteriors keep the slice sums
    // and marginals consistent, which is all the M-step needs.
    let xi: Vec<DMatrix<f64>> = (1..n)
        .map(|i| DMatrix::from_fn(k, k, |prev, cur| tau[(i - 1, prev)] * tau[(i, cur)]))
        .collect();
    let post = PosteriorSet::new(tau, xi, f64::NEG_INFINITY)?;
    m_step(series, &post, cfg)
}

/// E-step: emission densities followed by forward-backward smoothing under
/// the current parameters.
pub fn e_step(params: &MhmmrParams, series: &TimeSeries) -> Result<PosteriorSet> {
    let design = build_design_with_norm(series.timestamps(), params.order(), params.time_norm());
    let emis = emission_logdensities(params, series, &design)?;
    forward_backward(params, &emis)
}

/// M-step: closed-form updates of the chain parameters and K weighted
/// polynomial regressions with the posteriors as weights.
pub fn m_step(series: &TimeSeries, post: &PosteriorSet, cfg: &FitConfig) -> Result<MhmmrParams> {
    let n = series.len();
    let k = post.num_states();
    if post.len() != n {
        return Err(MhmmrError::LengthMismatch {
            left: post.len(),
            right: n,
        });
    }

    // pi <- first posterior row, lightly smoothed so no state dies forever.
    let mut pi = DVector::from_fn(k, |s, _| post.tau()[(0, s)] + PI_SMOOTHING);
    let pi_sum: f64 = pi.iter().sum();
    pi /= pi_sum;

    // Each transition row is the row-normalized sum of the pairwise posteriors.
    let mut trans = DMatrix::zeros(k, k);
    for slice in post.xi() {
        trans += slice;
    }
    for row in 0..k {
        let row_sum: f64 = (0..k).map(|c| trans[(row, c)]).sum();
        if row_sum > 0.0 {
            for c in 0..k {
                trans[(row, c)] /= row_sum;
            }
        } else {
            for c in 0..k {
                trans[(row, c)] = 1.0 / k as f64;
            }
        }
    }

    let design = build_design(series.timestamps(), cfg.p);
    let mut regressions = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    let uniform = vec![1.0; n];
    for state in 0..k {
        let w: Vec<f64> = (0..n).map(|i| post.tau()[(i, state)]).collect();
        // A state whose responsibility underflowed to exactly zero is refit
        // on the whole series so it stays alive and revivable.
        let w = if w.iter().sum::<f64>() > 0.0 { &w } else { &uniform };
        let b = weighted_mv_least_squares(design.matrix(), series.values(), w)?;
        let sigma = weighted_covariance(design.matrix(), series.values(), &b, w)?;
        regressions.push(b);
        covariances.push(sigma);
    }
    MhmmrParams::new(pi, trans, regressions, covariances, design.norm())
}

/// States whose total responsibility is below `p + 2`.
pub fn low_support_states(post: &PosteriorSet, p: usize) -> Vec<usize> {
    let k = post.num_states();
    (0..k)
        .filter(|&s| {
            let mass: f64 = (0..post.len()).map(|i| post.tau()[(i, s)]).sum();
            mass < (p + 2) as f64
        })
        .map(|s| s + 1)
        .collect()
}

/// Runs EM from a caller-supplied initialization until the relative
/// log-likelihood improvement drops below `rel_tol` or `max_iter` is reached.
pub fn fit_with_init(
    series: &TimeSeries,
    cfg: &FitConfig,
    init: MhmmrParams,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut params = init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_post: Option<PosteriorSet> = None;

    for iter in 0..cfg.max_iter {
        let post = e_step(&params, series)?;
        trace.push(post.loglik());
        iterations = iter + 1;
        if iter > 0 {
            let prev = trace[iter - 1];
            let improvement = (post.loglik() - prev).abs();
            if improvement <= cfg.rel_tol * prev.abs().max(1.0) {
                converged = true;
                last_post = Some(post);
                break;
            }
        }
        params = m_step(series, &post, cfg)?;
        last_post = Some(post);
    }

    let low_support = last_post
        .as_ref()
        .map(|post| !low_support_states(post, cfg.p).is_empty())
        .unwrap_or(false);

    Ok(FitResult {
        params,
        loglik_trace: trace,
        iterations,
        converged,
        restart_index: 0,
        low_support_warning: low_support,
    })
}

/// Full training entry point: `n_restarts` seeded initializations, each run
/// to convergence; the restart with the highest final log-likelihood wins.
pub fn fit(series: &TimeSeries, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    series.validate()?;
    let mut best: Option<FitResult> = None;
    for restart in 0..cfg.n_restarts {
        let mut restart_cfg = *cfg;
        restart_cfg.seed = cfg.seed.wrapping_add(restart as u64);
        let init = init_params(series, &restart_cfg)?;
        let mut result = fit_with_init(series, &restart_cfg, init)?;
        result.restart_index = restart;
        let replace = match &best {
            None => true,
            Some(b) => result.final_loglik() > b.final_loglik(),
        };
        if replace {
            best = Some(result);
        }
    }
    Ok(best.expect("n_restarts >= 1"))
}

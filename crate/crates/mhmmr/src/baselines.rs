//! Unsupervised comparison methods: k-means, a full-covariance GMM fitted by
//! EM, and the constant-mean Gaussian HMM (the regression model with p = 0).
//!
//! k-means and the GMM deliberately ignore temporal order; they see the raw
//! observation vectors only.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::floor_and_symmetrize;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{MhmmrError, Result};
use crate::series::TimeSeries;

const LN_2PI: f64 = 1.8378770664093453;

/// Output of a flat clustering method: 1-based hard assignments, the fitted
/// centers (component means for the GMM), and the objective value reached
/// (inertia for k-means, final log-likelihood for the GMM).
#[derive(Debug, Clone)]
pub struct HardClustering {
    pub assignments: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub objective: f64,
    /// Component covariances; empty for k-means.
    pub covariances: Vec<DMatrix<f64>>,
    /// Mixing weights; empty for k-means.
    pub weights: Vec<f64>,
    /// Per-iteration log-likelihood; empty for k-means.
    pub loglik_trace: Vec<f64>,
}

fn nearest_center(y: &DMatrix<f64>, centers: &DMatrix<f64>, i: usize) -> (usize, f64) {
    let k = centers.nrows();
    let d = y.ncols();
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for c in 0..k {
        let mut dist = 0.0;
        for j in 0..d {
            let diff = y[(i, j)] - centers[(c, j)];
            dist += diff * diff;
        }
        if dist < best_dist {
            best_dist = dist;
            best = c;
        }
    }
    (best, best_dist)
}

/// Lloyd's algorithm from seeded random-sample centers. Converges when the
/// largest center movement drops below `tol`; empty clusters are reseeded to
/// the point farthest from its current center.
pub fn kmeans_fit(
    y: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<HardClustering> {
    let n = y.nrows();
    let d = y.ncols();
    if n < k || k == 0 {
        return Err(MhmmrError::TooFewSamples { n, min: k.max(1) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, n, k);
    let mut centers = DMatrix::from_fn(k, d, |c, j| y[(picks.index(c), j)]);

    let mut assignments = vec![0usize; n];
    for _ in 0..max_iter {
        for i in 0..n {
            assignments[i] = nearest_center(y, &centers, i).0;
        }

        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::<f64>::zeros(k, d);
        for i in 0..n {
            counts[assignments[i]] += 1;
            for j in 0..d {
                sums[(assignments[i], j)] += y[(i, j)];
            }
        }
        let mut next = centers.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    next[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            } else {
                // Reseed to the farthest point overall.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = nearest_center(y, &centers, a).1;
                        let db = nearest_center(y, &centers, b).1;
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                for j in 0..d {
                    next[(c, j)] = y[(far, j)];
                }
            }
        }

        let mut movement = 0.0f64;
        for c in 0..k {
            let mut dist = 0.0;
            for j in 0..d {
                let diff = next[(c, j)] - centers[(c, j)];
                dist += diff * diff;
            }
            movement = movement.max(dist.sqrt());
        }
        centers = next;
        if movement < tol {
            break;
        }
    }

    let mut inertia = 0.0;
    for i in 0..n {
        let (c, dist) = nearest_center(y, &centers, i);
        assignments[i] = c;
        inertia += dist;
    }
    Ok(HardClustering {
        assignments: assignments.iter().map(|&c| c + 1).collect(),
        centers,
        objective: inertia,
        covariances: Vec::new(),
        weights: Vec::new(),
        loglik_trace: Vec::new(),
    })
}

/// Full-covariance Gaussian mixture fitted by EM from seeded random-sample
/// means. Assignments are the argmax responsibilities.
pub fn gmm_fit(
    y: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    rel_tol: f64,
) -> Result<HardClustering> {
    let n = y.nrows();
    let d = y.ncols();
    if n < k || k == 0 {
        return Err(MhmmrError::TooFewSamples { n, min: k.max(1) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, n, k);
    let mut means = DMatrix::from_fn(k, d, |c, j| y[(picks.index(c), j)]);

    // All components start from the floored global covariance.
    let col_means = DVector::from_fn(d, |j, _| y.column(j).sum() / n as f64);
    let mut global = DMatrix::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                global[(a, b)] += (y[(i, a)] - col_means[a]) * (y[(i, b)] - col_means[b]);
            }
        }
    }
    global /= n as f64;
    let global = floor_and_symmetrize(&mut global);
    let mut covariances = vec![global; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = DMatrix::zeros(n, k);
    let mut trace = Vec::new();
    for iter in 0..max_iter {
        // E-step in log space with per-row max shift.
        let mut loglik = 0.0;
        let mut log_comp = DMatrix::zeros(n, k);
        for c in 0..k {
            let chol = covariances[c]
                .clone()
                .cholesky()
                .ok_or(MhmmrError::CovarianceNotPD(c + 1))?;
            let log_det: f64 = (0..d).map(|j| chol.l_dirty()[(j, j)].ln()).sum::<f64>() * 2.0;
            let norm_const = weights[c].ln() - 0.5 * (d as f64 * LN_2PI + log_det);
            let mut diff = DVector::zeros(d);
            for i in 0..n {
                for j in 0..d {
                    diff[j] = y[(i, j)] - means[(c, j)];
                }
                let v = chol
                    .l_dirty()
                    .solve_lower_triangular(&diff)
                    .ok_or(MhmmrError::CovarianceNotPD(c + 1))?;
                log_comp[(i, c)] = norm_const - 0.5 * v.norm_squared();
            }
        }
        for i in 0..n {
            let row_max = (0..k).fold(f64::NEG_INFINITY, |m, c| m.max(log_comp[(i, c)]));
            let mut sum = 0.0;
            for c in 0..k {
                resp[(i, c)] = (log_comp[(i, c)] - row_max).exp();
                sum += resp[(i, c)];
            }
            for c in 0..k {
                resp[(i, c)] /= sum;
            }
            loglik += row_max + sum.ln();
        }
        trace.push(loglik);
        if iter > 0 {
            let prev = trace[iter - 1];
            if (loglik - prev).abs() <= rel_tol * prev.abs().max(1.0) {
                break;
            }
        }

        // M-step.
        for c in 0..k {
            let mass: f64 = (0..n).map(|i| resp[(i, c)]).sum();
            if mass <= 0.0 {
                continue;
            }
            weights[c] = mass / n as f64;
            for j in 0..d {
                means[(c, j)] = (0..n).map(|i| resp[(i, c)] * y[(i, j)]).sum::<f64>() / mass;
            }
            let mut sigma = DMatrix::zeros(d, d);
            for i in 0..n {
                for a in 0..d {
                    let da = y[(i, a)] - means[(c, a)];
                    for b in 0..d {
                        let db = y[(i, b)] - means[(c, b)];
                        sigma[(a, b)] += resp[(i, c)] * da * db;
                    }
                }
            }
            sigma /= mass;
            covariances[c] = floor_and_symmetrize(&mut sigma);
        }
        let weight_sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= weight_sum);
    }

    let assignments: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if resp[(i, c)] > resp[(i, best)] {
                    best = c;
                }
            }
            best + 1
        })
        .collect();
    let objective = *trace.last().expect("at least one EM iteration ran");
    Ok(HardClustering {
        assignments,
        centers: means,
        objective,
        covariances,
        weights,
        loglik_trace: trace,
    })
}

/// The standard Gaussian HMM baseline: exactly the regression model with the
/// polynomial order forced to zero, so each state's mean is constant in time.
pub fn hmm_gaussian_fit(series: &TimeSeries, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    let mut p0 = *cfg;
    p0.k = k;
    p0.p = 0;
    fit(series, &p0)
}

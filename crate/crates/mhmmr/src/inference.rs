//! Emission densities, scaled forward-backward smoothing, and Viterbi
//! decoding.

use nalgebra::{DMatrix, DVector};

use crate::design::DesignMatrix;
use crate::error::{MhmmrError, Result};
use crate::params::{DecodeSource, MhmmrParams, PosteriorSet, Segmentation};
use crate::series::TimeSeries;

const LN_2PI: f64 = 1.8378770664093453;
/// A forward column whose mass drops below this is treated as underflow;
/// dividing by subnormal scales would poison the backward pass.
const SCALE_FLOOR: f64 = 1e-300;

/// Per-sample, per-state Gaussian log-densities `log N(y_i; B_k^T t_i, Sigma_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    logdens: DMatrix<f64>,
}

impl EmissionTable {
    pub fn len(&self) -> usize {
        self.logdens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.logdens.nrows() == 0
    }

    pub fn num_states(&self) -> usize {
        self.logdens.ncols()
    }

    pub fn logdens(&self) -> &DMatrix<f64> {
        &self.logdens
    }
}

/// Evaluates every state's Gaussian log-density at every sample. Each
/// covariance is factorized once and the triangular factor reused across all
/// samples.
///
/// The design matrix must have been built with the normalization map stored in
/// `params`, otherwise the polynomial means are evaluated at the wrong times.
pub fn emission_logdensities(
    params: &MhmmrParams,
    series: &TimeSeries,
    design: &DesignMatrix,
) -> Result<EmissionTable> {
    let n = series.len();
    let k = params.num_states();
    let d = params.dim();
    if series.dim() != d {
        return Err(MhmmrError::DimensionMismatch(format!(
            "series has {} channels but the model expects {}",
            series.dim(),
            d
        )));
    }
    if design.matrix().nrows() != n || design.matrix().ncols() != params.order() + 1 {
        return Err(MhmmrError::DimensionMismatch(format!(
            "design matrix is {}x{}, expected {}x{}",
            design.matrix().nrows(),
            design.matrix().ncols(),
            n,
            params.order() + 1
        )));
    }
    if design.norm() != params.time_norm() {
        return Err(MhmmrError::DimensionMismatch(
            "design matrix was built with a different time normalization than the model".into(),
        ));
    }

    let mut logdens = DMatrix::zeros(n, k);
    for state in 0..k {
        let chol = params
            .covariance(state)
            .clone()
            .cholesky()
            .ok_or(MhmmrError::CovarianceNotPD(state + 1))?;
        let log_det: f64 = (0..d).map(|j| chol.l_dirty()[(j, j)].ln()).sum::<f64>() * 2.0;
        let norm_const = -0.5 * (d as f64 * LN_2PI + log_det);

        // Means of this state at every sample: n x d.
        let means = design.matrix() * params.regression(state);
        let mut resid = DVector::zeros(d);
        for i in 0..n {
            for c in 0..d {
                resid[c] = series.values()[(i, c)] - means[(i, c)];
            }
            // Quadratic form via the triangular factor: solve L v = r, q = |v|^2.
            let v = chol.l_dirty().solve_lower_triangular(&resid).ok_or(
                MhmmrError::CovarianceNotPD(state + 1),
            )?;
            logdens[(i, state)] = norm_const - 0.5 * v.norm_squared();
        }
    }
    Ok(EmissionTable { logdens })
}

/// Scaled forward-backward smoothing. Returns the posteriors `tau`, the
/// pairwise posteriors `xi` and the observed-data log-likelihood, which equals
/// the accumulated log scaling constants.
pub fn forward_backward(params: &MhmmrParams, emis: &EmissionTable) -> Result<PosteriorSet> {
    let n = emis.len();
    let k = params.num_states();
    if k != emis.num_states() {
        return Err(MhmmrError::DimensionMismatch(format!(
            "emission table has {} states but the model has {}",
            emis.num_states(),
            k
        )));
    }

    // Per-row max shift keeps exp() of very negative log-densities workable.
    let logdens = emis.logdens();
    let mut row_max = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        for s in 0..k {
            row_max[i] = row_max[i].max(logdens[(i, s)]);
        }
    }
    let dens = DMatrix::from_fn(n, k, |i, s| (logdens[(i, s)] - row_max[i]).exp());

    let mut alpha = DMatrix::zeros(n, k);
    let mut scale = vec![0.0f64; n];
    for s in 0..k {
        alpha[(0, s)] = params.pi()[s] * dens[(0, s)];
    }
    scale[0] = (0..k).map(|s| alpha[(0, s)]).sum();
    if !(scale[0] > SCALE_FLOOR) {
        return Err(MhmmrError::NumericalUnderflow(0));
    }
    for s in 0..k {
        alpha[(0, s)] /= scale[0];
    }
    for i in 1..n {
        for cur in 0..k {
            let mut acc = 0.0;
            for prev in 0..k {
                acc += alpha[(i - 1, prev)] * params.trans()[(prev, cur)];
            }
            alpha[(i, cur)] = acc * dens[(i, cur)];
        }
        scale[i] = (0..k).map(|s| alpha[(i, s)]).sum();
        if !(scale[i] > SCALE_FLOOR) {
            return Err(MhmmrError::NumericalUnderflow(i));
        }
        for s in 0..k {
            alpha[(i, s)] /= scale[i];
        }
    }

    let mut beta = DMatrix::zeros(n, k);
    for s in 0..k {
        beta[(n - 1, s)] = 1.0;
    }
    for i in (0..n - 1).rev() {
        for cur in 0..k {
            let mut acc = 0.0;
            for next in 0..k {
                acc += params.trans()[(cur, next)] * dens[(i + 1, next)] * beta[(i + 1, next)];
            }
            beta[(i, cur)] = acc / scale[i + 1];
        }
    }

    let mut tau = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut sum = 0.0;
        for s in 0..k {
            tau[(i, s)] = alpha[(i, s)] * beta[(i, s)];
            sum += tau[(i, s)];
        }
        for s in 0..k {
            tau[(i, s)] /= sum;
        }
    }

    let mut xi = Vec::with_capacity(n - 1);
    for i in 1..n {
        let mut slice = DMatrix::zeros(k, k);
        let mut sum = 0.0;
        for prev in 0..k {
            for cur in 0..k {
                let v = alpha[(i - 1, prev)]
                    * params.trans()[(prev, cur)]
                    * dens[(i, cur)]
                    * beta[(i, cur)]
                    / scale[i];
                slice[(prev, cur)] = v;
                sum += v;
            }
        }
        for v in slice.iter_mut() {
            *v /= sum;
        }
        xi.push(slice);
    }

    let loglik = scale
        .iter()
        .zip(row_max.iter())
        .map(|(c, m)| c.ln() + m)
        .sum();
    PosteriorSet::new(tau, xi, loglik)
}

/// Most probable state path `argmax_z log p(z, y)` computed in log space.
/// Ties break toward the lower state index; confidences come from a companion
/// forward-backward pass.
pub fn viterbi(params: &MhmmrParams, emis: &EmissionTable) -> Result<Segmentation> {
    let n = emis.len();
    let k = params.num_states();
    if k != emis.num_states() {
        return Err(MhmmrError::DimensionMismatch(format!(
            "emission table has {} states but the model has {}",
            emis.num_states(),
            k
        )));
    }
    let logdens = emis.logdens();
    let log_pi: Vec<f64> = (0..k).map(|s| params.pi()[s].ln()).collect();
    let log_trans = DMatrix::from_fn(k, k, |i, j| params.trans()[(i, j)].ln());

    let mut delta = DMatrix::zeros(n, k);
    let mut backptr = vec![vec![0usize; k]; n];
    for s in 0..k {
        delta[(0, s)] = log_pi[s] + logdens[(0, s)];
    }
    for i in 1..n {
        for cur in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0;
            for prev in 0..k {
                let cand = delta[(i - 1, prev)] + log_trans[(prev, cur)];
                if cand > best {
                    best = cand;
                    best_prev = prev;
                }
            }
            delta[(i, cur)] = best + logdens[(i, cur)];
            backptr[i][cur] = best_prev;
        }
    }

    let mut last = 0;
    let mut best = f64::NEG_INFINITY;
    for s in 0..k {
        if delta[(n - 1, s)] > best {
            best = delta[(n - 1, s)];
            last = s;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for i in (0..n - 1).rev() {
        path[i] = backptr[i + 1][path[i + 1]];
    }

    let post = forward_backward(params, emis)?;
    let confidences: Vec<f64> = path
        .iter()
        .enumerate()
        .map(|(i, &s)| post.tau()[(i, s)].min(1.0))
        .collect();
    let states = path.iter().map(|&s| s + 1).collect();
    Segmentation::new(states, confidences, DecodeSource::Viterbi)
}

/// Per-sample maximum-posterior decoding: `states[i] = argmax_k tau_ik`,
/// ties toward the lower index.
pub fn max_posterior_decode(post: &PosteriorSet) -> Segmentation {
    let n = post.len();
    let k = post.num_states();
    let mut states = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0;
        for s in 1..k {
            if post.tau()[(i, s)] > post.tau()[(i, best)] {
                best = s;
            }
        }
        states.push(best + 1);
        confidences.push(post.tau()[(i, best)].min(1.0));
    }
    Segmentation::new(states, confidences, DecodeSource::MaxPosterior)
        .expect("posterior rows are normalized")
}

/// Log joint probability `log p(z, y)` of a given hard path under the model;
/// used by tests to compare decoders.
pub fn path_log_joint(params: &MhmmrParams, emis: &EmissionTable, states: &[usize]) -> f64 {
    let logdens = emis.logdens();
    let mut total = params.pi()[states[0] - 1].ln() + logdens[(0, states[0] - 1)];
    for i in 1..states.len() {
        total += params.trans()[(states[i - 1] - 1, states[i] - 1)].ln();
        total += logdens[(i, states[i] - 1)];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, TimeNorm};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn series_from_values(values: DMatrix<f64>) -> TimeSeries {
        let n = values.nrows();
        let d = values.ncols();
        let ts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let names = (0..d).map(|c| format!("c{c}")).collect();
        TimeSeries::new(ts, values, names, None).unwrap()
    }

    fn random_params(
        rng: &mut ChaCha8Rng,
        k: usize,
        p: usize,
        d: usize,
        norm: TimeNorm,
    ) -> MhmmrParams {
        let mut pi = DVector::from_fn(k, |_, _| rng.random::<f64>() + 0.1);
        let total: f64 = pi.iter().sum();
        pi /= total;
        let mut trans = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() + 0.1);
        for r in 0..k {
            let row_sum: f64 = (0..k).map(|c| trans[(r, c)]).sum();
            for c in 0..k {
                trans[(r, c)] /= row_sum;
            }
        }
        let regressions: Vec<DMatrix<f64>> = (0..k)
            .map(|_| DMatrix::from_fn(p + 1, d, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let covariances: Vec<DMatrix<f64>> = (0..k)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                &a * a.transpose() + DMatrix::identity(d, d) * 0.5
            })
            .collect();
        MhmmrParams::new(pi, trans, regressions, covariances, norm).unwrap()
    }

    /// Exhaustive oracle: enumerate all K^n state paths, accumulate
    /// p(z) * p(y|z) from the raw quantities, and marginalize by brute force.
    struct Enumeration {
        loglik: f64,
        tau: DMatrix<f64>,
        xi: Vec<DMatrix<f64>>,
        best_path: Vec<usize>,
    }

    fn enumerate_paths(params: &MhmmrParams, emis: &EmissionTable) -> Enumeration {
        let n = emis.len();
        let k = params.num_states();
        let logdens = emis.logdens();
        let total_paths = k.pow(n as u32);
        let mut total = 0.0f64;
        let mut tau = DMatrix::zeros(n, k);
        let mut xi = vec![DMatrix::zeros(k, k); n - 1];
        let mut best_logp = f64::NEG_INFINITY;
        let mut best_path = vec![0usize; n];

        let mut path = vec![0usize; n];
        for code in 0..total_paths {
            let mut c = code;
            for slot in path.iter_mut() {
                *slot = c % k;
                c /= k;
            }
            let mut logp = params.pi()[path[0]].ln() + logdens[(0, path[0])];
            for i in 1..n {
                logp += params.trans()[(path[i - 1], path[i])].ln() + logdens[(i, path[i])];
            }
            let p = logp.exp();
            total += p;
            for i in 0..n {
                tau[(i, path[i])] += p;
            }
            for i in 1..n {
                xi[i - 1][(path[i - 1], path[i])] += p;
            }
            if logp > best_logp {
                best_logp = logp;
                best_path = path.clone();
            }
        }
        tau /= total;
        for slice in xi.iter_mut() {
            *slice /= total;
        }
        Enumeration {
            loglik: total.ln(),
            tau,
            xi,
            best_path: best_path.iter().map(|&s| s + 1).collect(),
        }
    }

    #[test]
    fn standard_normal_at_mode() {
        let norm = TimeNorm {
            offset: 0.0,
            scale: 1.0,
        };
        let params = MhmmrParams::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![DMatrix::zeros(1, 1)],
            vec![DMatrix::identity(1, 1)],
            norm,
        )
        .unwrap();
        let series = series_from_values(DMatrix::zeros(1, 1));
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        assert_abs_diff_eq!(emis.logdens()[(0, 0)], -0.9189385332046727, epsilon = 1e-7);
    }

    #[test]
    fn bivariate_at_mode() {
        let norm = TimeNorm {
            offset: 0.0,
            scale: 1.0,
        };
        let params = MhmmrParams::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![DMatrix::zeros(1, 2)],
            vec![DMatrix::identity(2, 2)],
            norm,
        )
        .unwrap();
        let series = series_from_values(DMatrix::zeros(1, 2));
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        assert_abs_diff_eq!(emis.logdens()[(0, 0)], -LN_2PI, epsilon = 1e-7);
    }

    fn build_design_for(series: &TimeSeries, params: &MhmmrParams) -> DesignMatrix {
        crate::design::build_design_with_norm(
            series.timestamps(),
            params.order(),
            params.time_norm(),
        )
    }

    #[test]
    fn density_matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = 3;
        let norm = TimeNorm {
            offset: 0.0,
            scale: 9.0,
        };
        let params = random_params(&mut rng, 2, 1, d, norm);
        let values = DMatrix::from_fn(10, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();

        for state in 0..2 {
            let sigma = params.covariance(state);
            // Hand-rolled 3x3 inverse and determinant via cofactors.
            let m = |i: usize, j: usize| sigma[(i, j)];
            let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
            let mut inv = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let r1 = (i + 1) % 3;
                    let r2 = (i + 2) % 3;
                    let c1 = (j + 1) % 3;
                    let c2 = (j + 2) % 3;
                    // Adjugate with sign folded into the cyclic index choice.
                    inv[j][i] = (m(r1, c1) * m(r2, c2) - m(r1, c2) * m(r2, c1)) / det;
                }
            }
            for i in 0..series.len() {
                let t_row = design.covariate(series.timestamps()[i]);
                let mean = params.regression(state).tr_mul(&t_row);
                let mut resid = [0.0f64; 3];
                for c in 0..3 {
                    resid[c] = series.values()[(i, c)] - mean[c];
                }
                let mut quad = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        quad += resid[a] * inv[a][b] * resid[b];
                    }
                }
                let oracle = -0.5 * (3.0 * LN_2PI + det.ln() + quad);
                assert_abs_diff_eq!(emis.logdens()[(i, state)], oracle, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn single_step_posterior_is_scaled_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 1.0,
        };
        let params = random_params(&mut rng, 3, 0, 1, norm);
        let series = series_from_values(DMatrix::from_row_slice(1, 1, &[0.3]));
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        let post = forward_backward(&params, &emis).unwrap();

        let dens: Vec<f64> = (0..3).map(|s| emis.logdens()[(0, s)].exp()).collect();
        let total: f64 = (0..3).map(|s| params.pi()[s] * dens[s]).sum();
        for s in 0..3 {
            assert_abs_diff_eq!(post.tau()[(0, s)], params.pi()[s] * dens[s] / total, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(post.loglik(), total.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_state_chain_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 5.0,
        };
        let params = random_params(&mut rng, 1, 1, 2, norm);
        let values = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        let post = forward_backward(&params, &emis).unwrap();

        assert!(post.tau().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(post
            .xi()
            .iter()
            .all(|s| (s[(0, 0)] - 1.0).abs() < 1e-12));
        let expected: f64 = (0..6).map(|i| emis.logdens()[(i, 0)]).sum();
        assert_abs_diff_eq!(post.loglik(), expected, epsilon = 1e-9);

        let seg = viterbi(&params, &emis).unwrap();
        assert!(seg.states().iter().all(|&s| s == 1));
    }

    #[test]
    fn forward_backward_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 5.0,
        };
        let params = random_params(&mut rng, 3, 1, 2, norm);
        let values = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();

        let post = forward_backward(&params, &emis).unwrap();
        let oracle = enumerate_paths(&params, &emis);

        assert_abs_diff_eq!(post.loglik(), oracle.loglik, epsilon = 1e-10);
        for i in 0..6 {
            for s in 0..3 {
                assert_abs_diff_eq!(post.tau()[(i, s)], oracle.tau[(i, s)], epsilon = 1e-10);
            }
        }
        for step in 0..5 {
            for a in 0..3 {
                for b in 0..3 {
                    assert_abs_diff_eq!(
                        post.xi_slice(step)[(a, b)],
                        oracle.xi[step][(a, b)],
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn viterbi_matches_enumeration_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(31337);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 5.0,
        };
        let params = random_params(&mut rng, 3, 0, 1, norm);
        let values = DMatrix::from_fn(6, 1, |_, _| rng.sample::<f64, _>(StandardNormal) * 1.5);
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();

        let seg = viterbi(&params, &emis).unwrap();
        let oracle = enumerate_paths(&params, &emis);
        assert_eq!(seg.states(), oracle.best_path.as_slice());
    }

    #[test]
    fn absorbing_start_forces_constant_path() {
        let norm = TimeNorm {
            offset: 0.0,
            scale: 2.0,
        };
        let params = MhmmrParams::new(
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DMatrix::identity(3, 3),
            vec![
                DMatrix::from_row_slice(1, 1, &[-5.0]),
                DMatrix::from_row_slice(1, 1, &[0.0]),
                DMatrix::from_row_slice(1, 1, &[5.0]),
            ],
            vec![DMatrix::identity(1, 1); 3],
            norm,
        )
        .unwrap();
        // Observations near state 3's mean; the chain still cannot leave state 2.
        let series = series_from_values(DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]));
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        let seg = viterbi(&params, &emis).unwrap();
        assert_eq!(seg.states(), &[2, 2, 2]);
    }

    #[test]
    fn one_hot_start_with_identity_transitions_pins_tau() {
        let norm = TimeNorm {
            offset: 0.0,
            scale: 4.0,
        };
        let params = MhmmrParams::new(
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::identity(2, 2),
            vec![DMatrix::zeros(1, 1); 2],
            vec![DMatrix::identity(1, 1); 2],
            norm,
        )
        .unwrap();
        let series = series_from_values(DMatrix::from_row_slice(5, 1, &[0.1, -0.2, 0.3, 0.0, 0.5]));
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();
        let post = forward_backward(&params, &emis).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(post.tau()[(i, 1)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn loglik_is_invariant_under_state_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(555);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 7.0,
        };
        let params = random_params(&mut rng, 3, 2, 2, norm);
        let values = DMatrix::from_fn(8, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);

        let emis = emission_logdensities(&params, &series, &design).unwrap();
        let base = forward_backward(&params, &emis).unwrap().loglik();

        let permuted = params.permute_states(&[2, 0, 1]).unwrap();
        let emis_p = emission_logdensities(&permuted, &series, &design).unwrap();
        let permuted_ll = forward_backward(&permuted, &emis_p).unwrap().loglik();
        assert!(((base - permuted_ll) / base).abs() <= 1e-9);
    }

    #[test]
    fn viterbi_path_beats_max_posterior_path_jointly() {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let norm = TimeNorm {
            offset: 0.0,
            scale: 9.0,
        };
        let params = random_params(&mut rng, 3, 1, 2, norm);
        let values = DMatrix::from_fn(10, 2, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
        let series = series_from_values(values);
        let design = build_design_for(&series, &params);
        let emis = emission_logdensities(&params, &series, &design).unwrap();

        let vit = viterbi(&params, &emis).unwrap();
        let post = forward_backward(&params, &emis).unwrap();
        let map = max_posterior_decode(&post);
        let lp_vit = path_log_joint(&params, &emis, vit.states());
        let lp_map = path_log_joint(&params, &emis, map.states());
        assert!(lp_vit >= lp_map - 1e-12);
    }

    #[test]
    fn max_posterior_rows_and_ties() {
        let tau = DMatrix::from_row_slice(2, 3, &[0.2, 0.7, 0.1, 0.5, 0.5, 0.0]);
        let xi = vec![{
            let mut s = DMatrix::zeros(3, 3);
            s[(0, 0)] = 0.1;
            s[(1, 0)] = 0.4;
            s[(1, 1)] = 0.5;
            s
        }];
        let post = PosteriorSet::new(tau, xi, -1.0).unwrap();
        let seg = max_posterior_decode(&post);
        assert_eq!(seg.states(), &[2, 1]);
        assert_abs_diff_eq!(seg.confidences()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(seg.confidences()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn max_posterior_on_single_state() {
        let tau = DMatrix::from_element(4, 1, 1.0);
        let xi = vec![DMatrix::from_element(1, 1, 1.0); 3];
        let post = PosteriorSet::new(tau, xi, -2.0).unwrap();
        let seg = max_posterior_decode(&post);
        assert!(seg.states().iter().all(|&s| s == 1));
        assert!(seg.confidences().iter().all(|&c| c == 1.0));
    }
}

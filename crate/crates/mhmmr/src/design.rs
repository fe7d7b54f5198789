//! Polynomial design matrices and the weighted least-squares / covariance
//! solves that make up the regression side of the M-step.

use nalgebra::{DMatrix, DVector};

use crate::error::{MhmmrError, Result};

/// Relative ridge applied to the normal equations when the plain solve fails.
const RIDGE_EPS: f64 = 1e-8;
/// Relative diagonal floor keeping every covariance estimate positive definite.
pub(crate) const COV_FLOOR_EPS: f64 = 1e-6;

/// Affine map from raw timestamps to normalized time `u = (t - offset) / scale`.
///
/// Raw timestamps can span thousands of seconds; powering them directly makes
/// the design matrix unusably ill-conditioned, so training normalizes time to
/// `[0, 1]` and the map is stored with the model so decoding reuses it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeNorm {
    pub offset: f64,
    pub scale: f64,
}

impl TimeNorm {
    /// Map spanning the given timestamps onto `[0, 1]`.
    pub fn from_timestamps(timestamps: &[f64]) -> Self {
        let offset = timestamps.first().copied().unwrap_or(0.0);
        let last = timestamps.last().copied().unwrap_or(offset);
        let span = last - offset;
        let scale = if span > 0.0 { span } else { 1.0 };
        Self { offset, scale }
    }

    pub fn apply(&self, t: f64) -> f64 {
        (t - self.offset) / self.scale
    }
}

/// The `n x (p+1)` matrix whose row `i` is `(1, u_i, u_i^2, ..., u_i^p)` for
/// normalized time `u_i`, together with the normalization map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    norm: TimeNorm,
    order: usize,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn norm(&self) -> TimeNorm {
        self.norm
    }

    /// Polynomial order `p`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// The covariate row `(1, u, ..., u^p)` for a single raw timestamp.
    pub fn covariate(&self, t: f64) -> DVector<f64> {
        covariate_row(self.norm.apply(t), self.order)
    }
}

fn covariate_row(u: f64, p: usize) -> DVector<f64> {
    let mut row = DVector::zeros(p + 1);
    let mut pow = 1.0;
    for j in 0..=p {
        row[j] = pow;
        pow *= u;
    }
    row
}

/// Builds the design matrix for the given timestamps, normalizing time to
/// `[0, 1]` first. Call sites must pass at least one timestamp.
pub fn build_design(timestamps: &[f64], p: usize) -> DesignMatrix {
    build_design_with_norm(timestamps, p, TimeNorm::from_timestamps(timestamps))
}

/// Builds the design matrix under a fixed normalization map; used at decode
/// time so new inputs see exactly the map the model was trained with.
pub fn build_design_with_norm(timestamps: &[f64], p: usize, norm: TimeNorm) -> DesignMatrix {
    let n = timestamps.len();
    assert!(n >= 1, "design matrix needs at least one timestamp");
    let mut matrix = DMatrix::zeros(n, p + 1);
    for (i, &t) in timestamps.iter().enumerate() {
        let u = norm.apply(t);
        let mut pow = 1.0;
        for j in 0..=p {
            matrix[(i, j)] = pow;
            pow *= u;
        }
    }
    DesignMatrix {
        matrix,
        norm,
        order: p,
    }
}

/// Solves the weighted multivariate least-squares problem
/// `B = argmin sum_i w_i * ||y_i - B^T x_i||^2`, i.e. the normal equations
/// `(X^T W X) B = X^T W Y`.
///
/// The plain system is solved by Cholesky; if that fails (rank-deficient
/// weights, near-empty regime) the solve is retried with a relative ridge
/// `lambda = 1e-8 * trace(X^T W X) / (p+1)` on the diagonal.
pub fn weighted_mv_least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &[f64],
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let m = x.ncols();
    if y.nrows() != n || w.len() != n {
        return Err(MhmmrError::DimensionMismatch(format!(
            "X has {} rows, Y has {}, weights {}",
            n,
            y.nrows(),
            w.len()
        )));
    }
    let weight_sum: f64 = w.iter().sum();
    if !(weight_sum > 0.0) || w.iter().any(|&wi| wi < 0.0 || !wi.is_finite()) {
        return Err(MhmmrError::DegenerateWeights);
    }

    let wx = DMatrix::from_fn(n, m, |i, j| w[i] * x[(i, j)]);
    let gram = x.tr_mul(&wx);
    let rhs = wx.tr_mul(y);

    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    let lambda = RIDGE_EPS * gram.trace() / m as f64;
    let mut ridged = gram;
    for j in 0..m {
        ridged[(j, j)] += lambda;
    }
    match ridged.cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => Err(MhmmrError::SingularSystem),
    }
}

/// Weighted covariance of the regression residuals `R = Y - X B`:
/// `Sigma = (1 / sum w) * R^T W R`, floored by
/// `eps * max(trace(Sigma)/d, 1) * I` and symmetrized.
pub fn weighted_covariance(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &[f64],
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let d = y.ncols();
    if y.nrows() != n || w.len() != n || b.nrows() != x.ncols() || b.ncols() != d {
        return Err(MhmmrError::DimensionMismatch(format!(
            "X {}x{}, Y {}x{}, B {}x{}, weights {}",
            n,
            x.ncols(),
            y.nrows(),
            d,
            b.nrows(),
            b.ncols(),
            w.len()
        )));
    }
    let weight_sum: f64 = w.iter().sum();
    if !(weight_sum > 0.0) || w.iter().any(|&wi| wi < 0.0 || !wi.is_finite()) {
        return Err(MhmmrError::DegenerateWeights);
    }

    let residuals = y - x * b;
    let weighted = DMatrix::from_fn(n, d, |i, j| w[i] * residuals[(i, j)]);
    let mut sigma = residuals.tr_mul(&weighted) / weight_sum;

    Ok(floor_and_symmetrize(&mut sigma))
}

/// Applies the relative diagonal floor and exact symmetrization used by every
/// covariance estimate in this crate (regression residuals and the GMM
/// baseline alike).
pub(crate) fn floor_and_symmetrize(sigma: &mut DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    let floor = COV_FLOOR_EPS * (sigma.trace() / d as f64).max(1.0);
    for j in 0..d {
        sigma[(j, j)] += floor;
    }
    let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (sigma[(i, j)] + sigma[(j, i)]));
    sym
}

/// The regression mean `B^T t` at one covariate row.
pub fn predict_mean(b: &DMatrix<f64>, t_row: &DVector<f64>) -> Result<DVector<f64>> {
    if b.nrows() != t_row.len() {
        return Err(MhmmrError::DimensionMismatch(format!(
            "B has {} rows but the covariate vector has {} entries",
            b.nrows(),
            t_row.len()
        )));
    }
    Ok(b.tr_mul(t_row).column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent oracle: solves A x = b by Gauss-Jordan elimination with
    /// partial pivoting, no nalgebra involved.
    fn gauss_jordan_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = a.len();
        let cols = b[0].len();
        let mut aug: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row = a[i].clone();
                row.extend_from_slice(&b[i]);
                row
            })
            .collect();
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&r1, &r2| aug[r1][col].abs().partial_cmp(&aug[r2][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot);
            let div = aug[col][col];
            assert!(div.abs() > 0.0, "oracle hit a singular pivot");
            for v in aug[col].iter_mut() {
                *v /= div;
            }
            for row in 0..m {
                if row != col {
                    let factor = aug[row][col];
                    for j in 0..m + cols {
                        aug[row][j] -= factor * aug[col][j];
                    }
                }
            }
        }
        aug.iter().map(|row| row[m..].to_vec()).collect()
    }

    /// Oracle route for the normal equations: form X^T W X and X^T W Y with
    /// plain f64 loops and solve by Gauss-Jordan.
    fn normal_equations_oracle(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        w: &[f64],
    ) -> Vec<Vec<f64>> {
        let n = x.nrows();
        let m = x.ncols();
        let d = y.ncols();
        let mut gram = vec![vec![0.0; m]; m];
        let mut rhs = vec![vec![0.0; d]; m];
        for i in 0..n {
            for a in 0..m {
                for b in 0..m {
                    gram[a][b] += w[i] * x[(i, a)] * x[(i, b)];
                }
                for c in 0..d {
                    rhs[a][c] += w[i] * x[(i, a)] * y[(i, c)];
                }
            }
        }
        gauss_jordan_solve(&gram, &rhs)
    }

    #[test]
    fn order_zero_design_is_all_ones() {
        let design = build_design(&[3.0, 7.5, 100.0], 0);
        assert_eq!(design.matrix().ncols(), 1);
        assert!(design.matrix().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quadratic_design_expands_normalized_times() {
        // Timestamps 0, 0.5, 1 normalize to themselves.
        let design = build_design(&[0.0, 0.5, 1.0], 2);
        let expected = [
            [1.0, 0.0, 0.0],
            [1.0, 0.5, 0.25],
            [1.0, 1.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(design.matrix()[(i, j)], expected[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cubic_design_has_four_columns() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 / 25.0).collect();
        let design = build_design(&ts, 3);
        assert_eq!(design.matrix().shape(), (40, 4));
        // Rows are reproducible by direct powering of the normalized time.
        for (i, &t) in ts.iter().enumerate() {
            let u = design.norm().apply(t);
            for j in 0..4 {
                assert_abs_diff_eq!(design.matrix()[(i, j)], u.powi(j as i32), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn constant_fit_with_uniform_weights_is_the_column_mean() {
        let design = build_design(&[0.0, 1.0, 2.0, 3.0], 0);
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        let b = weighted_mv_least_squares(design.matrix(), &y, &[1.0; 4]).unwrap();
        assert_abs_diff_eq!(b[(0, 0)], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b[(0, 1)], 25.0, epsilon = 1e-12);
    }

    #[test]
    fn one_hot_weight_fits_the_single_point() {
        let design = build_design(&[0.0, 1.0, 2.0], 0);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 5.0, -5.0, 9.0, -9.0]);
        let b = weighted_mv_least_squares(design.matrix(), &y, &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(b[(0, 0)], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[(0, 1)], -5.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_independent_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let design = build_design(&ts, 2);
        let y = DMatrix::from_fn(20, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..20).map(|_| rng.random::<f64>() + 0.05).collect();

        let b = weighted_mv_least_squares(design.matrix(), &y, &w).unwrap();
        let oracle = normal_equations_oracle(design.matrix(), &y, &w);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(b[(i, j)], oracle[i][j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn weight_scaling_leaves_solution_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ts: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let design = build_design(&ts, 3);
        let y = DMatrix::from_fn(30, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..30).map(|_| rng.random::<f64>() + 0.01).collect();
        let w_scaled: Vec<f64> = w.iter().map(|v| v * 1234.5).collect();

        let b1 = weighted_mv_least_squares(design.matrix(), &y, &w).unwrap();
        let b2 = weighted_mv_least_squares(design.matrix(), &y, &w_scaled).unwrap();
        for (a, b) in b1.iter().zip(b2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let design = build_design(&[0.0, 1.0], 0);
        let y = DMatrix::zeros(2, 1);
        let err = weighted_mv_least_squares(design.matrix(), &y, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, MhmmrError::DegenerateWeights));
    }

    #[test]
    fn exact_fit_leaves_only_the_floor() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let design = build_design(&ts, 1);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        let y = design.matrix() * &b;
        let sigma = weighted_covariance(design.matrix(), &y, &b, &[1.0; 10]).unwrap();
        // Zero residuals: trace is 0, so the floor is eps * 1 * I.
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { COV_FLOOR_EPS } else { 0.0 };
                assert_abs_diff_eq!(sigma[(i, j)], expected, epsilon = 1e-18);
            }
        }
    }

    #[test]
    fn uniform_weights_give_mle_covariance_plus_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 50;
        let ts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let design = build_design(&ts, 0);
        let y = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = weighted_mv_least_squares(design.matrix(), &y, &[1.0; 50]).unwrap();
        let sigma = weighted_covariance(design.matrix(), &y, &b, &[1.0; 50]).unwrap();

        // Independent two-pass oracle: column means, then centered cross products / n.
        let mut means = [0.0f64; 2];
        for i in 0..n {
            for c in 0..2 {
                means[c] += y[(i, c)];
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut oracle = [[0.0f64; 2]; 2];
        for i in 0..n {
            for a in 0..2 {
                for c in 0..2 {
                    oracle[a][c] += (y[(i, a)] - means[a]) * (y[(i, c)] - means[c]);
                }
            }
        }
        let trace: f64 = (0..2).map(|a| oracle[a][a] / n as f64).sum();
        let floor = COV_FLOOR_EPS * (trace / 2.0).max(1.0);
        for a in 0..2 {
            for c in 0..2 {
                let expected = oracle[a][c] / n as f64 + if a == c { floor } else { 0.0 };
                assert_abs_diff_eq!(sigma[(a, c)], expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn monte_carlo_covariance_recovery() {
        // Planted Sigma = [[1, 0.3], [0.3, 2]] via its Cholesky factor.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let l21 = 0.3;
        let l22 = (2.0f64 - 0.09).sqrt();
        let ts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let design = build_design(&ts, 1);
        let b_true = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 3.0]);
        let mean = design.matrix() * &b_true;
        let mut y = DMatrix::zeros(n, 2);
        for i in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            y[(i, 0)] = mean[(i, 0)] + z1;
            y[(i, 1)] = mean[(i, 1)] + l21 * z1 + l22 * z2;
        }
        let sigma = weighted_covariance(design.matrix(), &y, &b_true, &vec![1.0; n]).unwrap();
        let planted = [[1.0, 0.3], [0.3, 2.0]];
        for a in 0..2 {
            for c in 0..2 {
                assert!(
                    (sigma[(a, c)] - planted[a][c]).abs() < 0.1,
                    "entry ({a},{c}) off: {}",
                    sigma[(a, c)]
                );
            }
        }
    }

    #[test]
    fn covariance_is_symmetric_and_floored() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let design = build_design(&ts, 2);
        let y = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let b = weighted_mv_least_squares(design.matrix(), &y, &w).unwrap();
        let sigma = weighted_covariance(design.matrix(), &y, &b, &w).unwrap();

        for i in 0..3 {
            for j in 0..3 {
                assert!((sigma[(i, j)] - sigma[(j, i)]).abs() <= 1e-12);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(sigma.clone());
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let floor = COV_FLOOR_EPS * (sigma.trace() / 3.0).max(1.0);
        assert!(min_eig >= floor * (1.0 - 1e-6));
    }

    #[test]
    fn univariate_path_matches_scalar_regression() {
        // Scalar weighted linear regression computed with closed-form sums.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 25;
        let ts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let design = build_design(&ts, 1);
        let y = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();

        let b = weighted_mv_least_squares(design.matrix(), &y, &w).unwrap();

        let (mut sw, mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let u = design.matrix()[(i, 1)];
            sw += w[i];
            su += w[i] * u;
            suu += w[i] * u * u;
            sy += w[i] * y[(i, 0)];
            suy += w[i] * u * y[(i, 0)];
        }
        let det = sw * suu - su * su;
        let intercept = (suu * sy - su * suy) / det;
        let slope = (sw * suy - su * sy) / det;
        assert_abs_diff_eq!(b[(0, 0)], intercept, epsilon = 1e-10);
        assert_abs_diff_eq!(b[(1, 0)], slope, epsilon = 1e-10);
    }

    #[test]
    fn constant_prediction_is_the_coefficient_row() {
        let b = DMatrix::from_row_slice(1, 2, &[1.5, -2.0]);
        let mean = predict_mean(&b, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(mean[0], 1.5);
        assert_eq!(mean[1], -2.0);
    }

    #[test]
    fn prediction_matches_horner_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let p = 3;
            let d = 4;
            let b = DMatrix::from_fn(p + 1, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let u: f64 = rng.random();
            let t_row = DVector::from_fn(p + 1, |j, _| u.powi(j as i32));
            let mean = predict_mean(&b, &t_row).unwrap();
            for c in 0..d {
                // Horner evaluation of column c.
                let mut horner = 0.0;
                for j in (0..=p).rev() {
                    horner = horner * u + b[(j, c)];
                }
                assert_abs_diff_eq!(mean[c], horner, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn prediction_dimension_mismatch_errors() {
        let b = DMatrix::zeros(3, 2);
        let err = predict_mean(&b, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, MhmmrError::DimensionMismatch(_)));
    }
}

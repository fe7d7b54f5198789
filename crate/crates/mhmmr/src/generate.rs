//! Synthetic data generation: samples a label sequence from the Markov chain
//! and observations from the per-state polynomial Gaussians, returning both
//! the labeled series and the ground-truth model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::design::TimeNorm;
use crate::error::{MhmmrError, Result};
use crate::params::MhmmrParams;
use crate::series::TimeSeries;

/// Declarative description of a synthetic instance.
///
/// The Markov chain comes either from explicit `pi`/`trans` or from a
/// `mean_dwell` parameter that induces a diagonal-dominant transition matrix
/// with uniform off-diagonal mass. The emissions come either from explicit
/// `regressions`/`covariances` or from a `separation` parameter that spaces
/// the regime mean curves evenly.
///
/// Regression coefficients apply to time normalized to `[0, 1]` over the
/// generated span.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub k: usize,
    pub p: usize,
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pi: Option<Vec<f64>>,
    #[serde(default)]
    pub trans: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub mean_dwell: Option<f64>,
    /// Per state: a `(p+1) x d` coefficient matrix, row-major.
    #[serde(default)]
    pub regressions: Option<Vec<Vec<Vec<f64>>>>,
    /// Per state: a `d x d` covariance matrix, row-major.
    #[serde(default)]
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub separation: Option<f64>,
    /// Noise standard deviation used with `separation`; defaults to 1.
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub channel_names: Option<Vec<String>>,
}

fn default_sample_rate() -> f64 {
    25.0
}

impl GeneratorSpec {
    fn validate_basic(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 || self.n == 0 {
            return Err(MhmmrError::InvalidSpec(
                "k, d and n must all be at least 1".into(),
            ));
        }
        if !(self.sample_rate > 0.0) {
            return Err(MhmmrError::InvalidSpec("sample_rate must be positive".into()));
        }
        match (&self.pi, &self.trans, self.mean_dwell) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => {
                return Err(MhmmrError::InvalidSpec(
                    "give either pi and trans, or mean_dwell".into(),
                ))
            }
        }
        match (&self.regressions, &self.covariances, self.separation) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => {
                return Err(MhmmrError::InvalidSpec(
                    "give either regressions and covariances, or separation".into(),
                ))
            }
        }
        if let Some(dwell) = self.mean_dwell {
            if !(dwell > 1.0) {
                return Err(MhmmrError::InvalidSpec(
                    "mean_dwell must exceed 1 sample".into(),
                ));
            }
        }
        if let Some(sep) = self.separation {
            if !(sep > 0.0) {
                return Err(MhmmrError::InvalidSpec("separation must be positive".into()));
            }
        }
        if let Some(sd) = self.noise_sd {
            if !(sd > 0.0) {
                return Err(MhmmrError::InvalidSpec("noise_sd must be positive".into()));
            }
        }
        if let Some(names) = &self.channel_names {
            if names.len() != self.d {
                return Err(MhmmrError::InvalidSpec(format!(
                    "{} channel names for d = {}",
                    names.len(),
                    self.d
                )));
            }
        }
        Ok(())
    }

    fn chain(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k = self.k;
        if let Some(dwell) = self.mean_dwell {
            let pi = DVector::from_element(k, 1.0 / k as f64);
            let trans = if k == 1 {
                DMatrix::from_element(1, 1, 1.0)
            } else {
                let leave = 1.0 / dwell;
                let off = leave / (k - 1) as f64;
                DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 - leave } else { off })
            };
            return Ok((pi, trans));
        }
        let pi_vec = self.pi.as_ref().unwrap();
        let trans_rows = self.trans.as_ref().unwrap();
        if pi_vec.len() != k || trans_rows.len() != k || trans_rows.iter().any(|r| r.len() != k) {
            return Err(MhmmrError::InvalidSpec(format!(
                "pi must have {k} entries and trans must be {k}x{k}"
            )));
        }
        let pi = DVector::from_vec(pi_vec.clone());
        let trans = DMatrix::from_fn(k, k, |i, j| trans_rows[i][j]);
        Ok((pi, trans))
    }

    fn emissions(&self) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        let (k, p, d) = (self.k, self.p, self.d);
        if let Some(sep) = self.separation {
            let sd = self.noise_sd.unwrap_or(1.0);
            // Regime offsets `sep` apart, plus a shared polynomial drift of
            // magnitude sep/2 so the means genuinely vary over time. The
            // drift is identical across states, which keeps adjacent curves
            // exactly `sep` apart at every instant.
            let regressions = (0..k)
                .map(|state| {
                    DMatrix::from_fn(p + 1, d, |row, col| {
                        if row == 0 {
                            sep * state as f64
                        } else {
                            let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
                            sign * sep / 2.0
                        }
                    })
                })
                .collect();
            let covariances = (0..k)
                .map(|_| DMatrix::identity(d, d) * (sd * sd))
                .collect();
            return Ok((regressions, covariances));
        }
        let b_list = self.regressions.as_ref().unwrap();
        let s_list = self.covariances.as_ref().unwrap();
        if b_list.len() != k || s_list.len() != k {
            return Err(MhmmrError::InvalidSpec(format!(
                "need {k} regression and covariance matrices"
            )));
        }
        let mut regressions = Vec::with_capacity(k);
        let mut covariances = Vec::with_capacity(k);
        for state in 0..k {
            let b = &b_list[state];
            if b.len() != p + 1 || b.iter().any(|row| row.len() != d) {
                return Err(MhmmrError::InvalidSpec(format!(
                    "regression matrix of state {} must be {}x{}",
                    state + 1,
                    p + 1,
                    d
                )));
            }
            regressions.push(DMatrix::from_fn(p + 1, d, |r, c| b[r][c]));
            let s = &s_list[state];
            if s.len() != d || s.iter().any(|row| row.len() != d) {
                return Err(MhmmrError::InvalidSpec(format!(
                    "covariance matrix of state {} must be {d}x{d}",
                    state + 1
                )));
            }
            covariances.push(DMatrix::from_fn(d, d, |r, c| s[r][c]));
        }
        Ok((regressions, covariances))
    }

    fn names(&self) -> Vec<String> {
        self.channel_names
            .clone()
            .unwrap_or_else(|| (1..=self.d).map(|c| format!("c{c}")).collect())
    }
}

/// Samples one labeled series and returns it with the ground-truth model.
pub fn generate(spec: &GeneratorSpec) -> Result<(TimeSeries, MhmmrParams)> {
    spec.validate_basic()?;
    let (pi, trans) = spec.chain()?;
    let (regressions, covariances) = spec.emissions()?;

    let n = spec.n;
    let timestamps: Vec<f64> = (0..n).map(|i| i as f64 / spec.sample_rate).collect();
    let norm = TimeNorm::from_timestamps(&timestamps);
    let params = MhmmrParams::new(pi, trans, regressions, covariances, norm)
        .map_err(|e| MhmmrError::InvalidSpec(e.to_string()))?;

    let k = spec.k;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // State path from the chain.
    let mut states = Vec::with_capacity(n);
    let mut current = sample_categorical(&mut rng, params.pi().as_slice());
    states.push(current);
    for _ in 1..n {
        let row: Vec<f64> = (0..k).map(|j| params.trans()[(current, j)]).collect();
        current = sample_categorical(&mut rng, &row);
        states.push(current);
    }

    // Observations: polynomial mean plus correlated Gaussian noise.
    let chols: Vec<_> = (0..k)
        .map(|s| {
            params
                .covariance(s)
                .clone()
                .cholesky()
                .ok_or(MhmmrError::CovarianceNotPD(s + 1))
        })
        .collect::<Result<_>>()?;
    let mut values = DMatrix::zeros(n, d);
    for i in 0..n {
        let state = states[i];
        let u = norm.apply(timestamps[i]);
        let mut t_row = DVector::zeros(spec.p + 1);
        let mut pow = 1.0;
        for j in 0..=spec.p {
            t_row[j] = pow;
            pow *= u;
        }
        let mean = params.regression(state).tr_mul(&t_row);
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = chols[state].l() * z;
        for c in 0..d {
            values[(i, c)] = mean[(c, 0)] + noise[c];
        }
    }

    let labels: Vec<usize> = states.iter().map(|&s| s + 1).collect();
    let series = TimeSeries::new(timestamps, values, spec.names(), Some(labels))?;
    Ok((series, params))
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return idx;
        }
    }
    probs.len() - 1
}

/// The well-separated small instance: three regimes with linear mean curves
/// six noise standard deviations apart and long dwells.
pub fn separated(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        k: 3,
        p: 1,
        d: 2,
        n: 3000,
        sample_rate: 25.0,
        seed,
        pi: None,
        trans: None,
        mean_dwell: Some(200.0),
        regressions: None,
        covariances: None,
        separation: Some(6.0),
        noise_sd: Some(1.0),
        channel_names: None,
    }
}

/// Activity-shaped instance: twelve regimes visited in a fixed cyclic order,
/// nine channels from three simulated sensors, cubic mean curves, and short
/// transition regimes between longer static ones.
pub fn paper_shaped(seed: u64) -> GeneratorSpec {
    let k = 12;
    let p = 3;
    let d = 9;

    // Regimes 3, 5, 7, 9 and 10 play the role of brief transitions.
    let transition_states = [2usize, 4, 6, 8, 9];
    let dwell = |state: usize| -> f64 {
        if transition_states.contains(&state) {
            40.0
        } else {
            240.0
        }
    };
    let mut pi = vec![0.0; k];
    pi[0] = 1.0;
    let mut trans = vec![vec![0.0; k]; k];
    for state in 0..k {
        let leave = 1.0 / dwell(state);
        trans[state][state] = 1.0 - leave;
        trans[state][(state + 1) % k] = leave;
    }

    // Per-sensor weighting of the state offsets (the simulated chest sensor
    // is the most informative), a deterministic per-state wiggle so states
    // are not collinear, and a shared smoothstep drift that moves every mean
    // curve over time without changing the distance between states.
    let sensor_weight = [1.0, 0.85, 0.6];
    let offset_step = 1.4;
    let wiggle_amp = 1.2;
    let drift_amp = 5.0;
    let regressions: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|state| {
            (0..=p)
                .map(|row| {
                    (0..d)
                        .map(|c| {
                            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                            match row {
                                0 => {
                                    let angle = 2.0 * std::f64::consts::PI
                                        * ((state * (c + 1)) as f64)
                                        / 13.0;
                                    offset_step * state as f64 * sensor_weight[c / 3]
                                        + wiggle_amp * angle.cos()
                                }
                                1 => 0.0,
                                2 => 3.0 * drift_amp * sign,
                                _ => -2.0 * drift_amp * sign,
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let covariances: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| {
            (0..d)
                .map(|r| (0..d).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect()
        })
        .collect();

    let names = ["chest", "thigh", "ankle"]
        .iter()
        .flat_map(|s| ["x", "y", "z"].iter().map(move |a| format!("{s}_{a}")))
        .collect();

    GeneratorSpec {
        k,
        p,
        d,
        n: 4000,
        sample_rate: 25.0,
        seed,
        pi: Some(pi),
        trans: Some(trans),
        mean_dwell: None,
        regressions: Some(regressions),
        covariances: Some(covariances),
        separation: None,
        noise_sd: None,
        channel_names: Some(names),
    }
}

/// Looks up a preset by its command-line name.
pub fn preset(name: &str, seed: u64) -> Result<GeneratorSpec> {
    match name {
        "paper-shaped" => Ok(paper_shaped(seed)),
        "separated" => Ok(separated(seed)),
        other => Err(MhmmrError::InvalidSpec(format!(
            "unknown preset `{other}` (expected paper-shaped or separated)"
        ))),
    }
}

//! The observed multivariate time series.

use nalgebra::DMatrix;

use crate::error::{MhmmrError, Result};

/// A multivariate time series: `n` timestamped observations, each a `d`-vector
/// of channel values, with optional 1-based ground-truth labels.
///
/// Immutable after construction; every constructor validates the invariants
/// (strictly increasing timestamps, finite values, label length).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    timestamps: Vec<f64>,
    values: DMatrix<f64>,
    channel_names: Vec<String>,
    labels: Option<Vec<usize>>,
}

impl TimeSeries {
    pub fn new(
        timestamps: Vec<f64>,
        values: DMatrix<f64>,
        channel_names: Vec<String>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let series = Self {
            timestamps,
            values,
            channel_names,
            labels,
        };
        series.validate()?;
        Ok(series)
    }

    /// Re-checks every invariant. `new` already calls this, so a value you
    /// hold always passes; loaders use it after deserialization.
    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if n == 0 {
            return Err(MhmmrError::TooFewSamples { n: 0, min: 1 });
        }
        if self.values.nrows() != n {
            return Err(MhmmrError::DimensionMismatch(format!(
                "{} timestamps but {} value rows",
                n,
                self.values.nrows()
            )));
        }
        let d = self.values.ncols();
        if d == 0 {
            return Err(MhmmrError::DimensionMismatch(
                "series must have at least one channel".into(),
            ));
        }
        if self.channel_names.len() != d {
            return Err(MhmmrError::DimensionMismatch(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                d
            )));
        }
        for i in 0..n {
            if !self.timestamps[i].is_finite() || (i > 0 && self.timestamps[i] <= self.timestamps[i - 1])
            {
                return Err(MhmmrError::NonMonotonicTime(i));
            }
        }
        for row in 0..n {
            for col in 0..d {
                if !self.values[(row, col)].is_finite() {
                    return Err(MhmmrError::NonFiniteValue { row, col });
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(MhmmrError::LabelLengthMismatch {
                    labels: labels.len(),
                    n,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Number of channels `d`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    /// The `n x d` value matrix.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// Ground-truth labels (1-based), if present. Never used by training.
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}

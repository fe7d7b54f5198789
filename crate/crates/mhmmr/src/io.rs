//! CSV ingestion and export, model persistence, and posterior export.
//!
//! All floats are serialized with 17 significant decimal digits so every
//! finite double survives a round trip bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::design::TimeNorm;
use crate::error::{MhmmrError, Result};
use crate::params::{MhmmrParams, PosteriorSet, Segmentation};
use crate::series::TimeSeries;

const MODEL_FORMAT: &str = "mhmmr-model/1";

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Loads a series from CSV. The header must contain a `t` column (seconds,
/// strictly increasing); an optional integer `label` column carries ground
/// truth; every other column becomes a channel, in header order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(MhmmrError::MissingTimeColumn)?;
    let columns: Vec<&str> = header.split(',').map(|c| c.trim()).collect();

    let time_col = columns
        .iter()
        .position(|&c| c == "t")
        .ok_or(MhmmrError::MissingTimeColumn)?;
    let label_col = columns.iter().position(|&c| c == "label");
    let channel_cols: Vec<usize> = (0..columns.len())
        .filter(|&i| i != time_col && Some(i) != label_col)
        .collect();
    let channel_names: Vec<String> = channel_cols
        .iter()
        .map(|&i| columns[i].to_string())
        .collect();

    let mut timestamps = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != columns.len() {
            return Err(MhmmrError::ParseError {
                row: row_idx,
                col: fields.len().min(columns.len()),
            });
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col].parse::<f64>().map_err(|_| MhmmrError::ParseError {
                row: row_idx,
                col,
            })
        };
        let t = parse(time_col)?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(MhmmrError::NonMonotonicTime(row_idx));
            }
        }
        timestamps.push(t);
        let mut row = Vec::with_capacity(channel_cols.len());
        for &col in &channel_cols {
            row.push(parse(col)?);
        }
        rows.push(row);
        if let Some(col) = label_col {
            let label = fields[col].parse::<usize>().map_err(|_| MhmmrError::ParseError {
                row: row_idx,
                col,
            })?;
            labels.push(label);
        }
    }

    let n = timestamps.len();
    let d = channel_names.len();
    let values = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    TimeSeries::new(
        timestamps,
        values,
        channel_names,
        label_col.map(|_| labels),
    )
}

/// Writes a series as CSV with columns `t`, the channels, and `label` last
/// when ground truth is present.
pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for name in series.channel_names() {
        out.push(',');
        out.push_str(name);
    }
    if series.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..series.len() {
        out.push_str(&fmt_f64(series.timestamps()[i]));
        for c in 0..series.dim() {
            out.push(',');
            out.push_str(&fmt_f64(series.values()[(i, c)]));
        }
        if let Some(labels) = series.labels() {
            out.push(',');
            out.push_str(&labels[i].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Persists a model as versioned structured text: hyperparameters, the time
/// normalization, then `pi`, the transition matrix, and each state's
/// regression and covariance matrices.
pub fn save_model(params: &MhmmrParams, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let k = params.num_states();
    let p = params.order();
    let d = params.dim();
    writeln!(file, "{MODEL_FORMAT}")?;
    writeln!(file, "k {k}")?;
    writeln!(file, "p {p}")?;
    writeln!(file, "d {d}")?;
    writeln!(file, "norm_offset {}", fmt_f64(params.time_norm().offset))?;
    writeln!(file, "norm_scale {}", fmt_f64(params.time_norm().scale))?;
    let pi_line: Vec<String> = (0..k).map(|s| fmt_f64(params.pi()[s])).collect();
    writeln!(file, "pi {}", pi_line.join(" "))?;
    writeln!(file, "trans")?;
    for row in 0..k {
        let line: Vec<String> = (0..k).map(|c| fmt_f64(params.trans()[(row, c)])).collect();
        writeln!(file, "{}", line.join(" "))?;
    }
    for state in 0..k {
        writeln!(file, "b {}", state + 1)?;
        for row in 0..=p {
            let line: Vec<String> = (0..d)
                .map(|c| fmt_f64(params.regression(state)[(row, c)]))
                .collect();
            writeln!(file, "{}", line.join(" "))?;
        }
    }
    for state in 0..k {
        writeln!(file, "sigma {}", state + 1)?;
        for row in 0..d {
            let line: Vec<String> = (0..d)
                .map(|c| fmt_f64(params.covariance(state)[(row, c)]))
                .collect();
            writeln!(file, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

struct ModelReader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> ModelReader<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| MhmmrError::FormatVersionMismatch(format!(
                "file ends early at line {}",
                self.line_no
            )))
    }

    fn tagged(&mut self, tag: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        line.strip_prefix(tag)
            .and_then(|rest| rest.strip_prefix(' ').or(if rest.is_empty() { Some("") } else { None }))
            .ok_or_else(|| MhmmrError::FormatVersionMismatch(format!(
                "expected `{tag}` at line {}",
                self.line_no
            )))
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| MhmmrError::FormatVersionMismatch(format!(
                "unparseable numbers at line {}",
                self.line_no
            )))?;
        if values.len() != expected {
            return Err(MhmmrError::FormatVersionMismatch(format!(
                "expected {expected} numbers at line {}, found {}",
                self.line_no,
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Loads and fully re-validates a persisted model.
pub fn load_model(path: impl AsRef<Path>) -> Result<MhmmrParams> {
    let text = fs::read_to_string(path)?;
    let mut reader = ModelReader {
        lines: text.lines(),
        line_no: 0,
    };
    let version = reader.next_line()?;
    if version.trim() != MODEL_FORMAT {
        return Err(MhmmrError::FormatVersionMismatch(format!(
            "`{}`, expected `{MODEL_FORMAT}`",
            version.trim()
        )));
    }
    let parse_usize = |raw: &str, what: &str| -> Result<usize> {
        raw.trim().parse::<usize>().map_err(|_| {
            MhmmrError::FormatVersionMismatch(format!("bad {what} value `{}`", raw.trim()))
        })
    };
    let k = parse_usize(reader.tagged("k")?, "k")?;
    let p = parse_usize(reader.tagged("p")?, "p")?;
    let d = parse_usize(reader.tagged("d")?, "d")?;
    let parse_f64 = |raw: &str, what: &str| -> Result<f64> {
        raw.trim().parse::<f64>().map_err(|_| {
            MhmmrError::FormatVersionMismatch(format!("bad {what} value `{}`", raw.trim()))
        })
    };
    let offset = parse_f64(reader.tagged("norm_offset")?, "norm_offset")?;
    let scale = parse_f64(reader.tagged("norm_scale")?, "norm_scale")?;

    let pi_values = reader
        .tagged("pi")?
        .split_whitespace()
        .map(|v| v.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| MhmmrError::FormatVersionMismatch("unparseable pi line".into()))?;
    if pi_values.len() != k {
        return Err(MhmmrError::FormatVersionMismatch(format!(
            "pi has {} entries for k = {k}",
            pi_values.len()
        )));
    }
    reader.tagged("trans")?;
    let mut trans = DMatrix::zeros(k, k);
    for row in 0..k {
        let values = reader.floats(k)?;
        for (col, v) in values.into_iter().enumerate() {
            trans[(row, col)] = v;
        }
    }
    let mut regressions = Vec::with_capacity(k);
    for state in 0..k {
        let tag = reader.tagged("b")?;
        if parse_usize(tag, "b index")? != state + 1 {
            return Err(MhmmrError::FormatVersionMismatch(format!(
                "regression blocks out of order at state {}",
                state + 1
            )));
        }
        let mut b = DMatrix::zeros(p + 1, d);
        for row in 0..=p {
            let values = reader.floats(d)?;
            for (col, v) in values.into_iter().enumerate() {
                b[(row, col)] = v;
            }
        }
        regressions.push(b);
    }
    let mut covariances = Vec::with_capacity(k);
    for state in 0..k {
        let tag = reader.tagged("sigma")?;
        if parse_usize(tag, "sigma index")? != state + 1 {
            return Err(MhmmrError::FormatVersionMismatch(format!(
                "covariance blocks out of order at state {}",
                state + 1
            )));
        }
        let mut sigma = DMatrix::zeros(d, d);
        for row in 0..d {
            let values = reader.floats(d)?;
            for (col, v) in values.into_iter().enumerate() {
                sigma[(row, col)] = v;
            }
        }
        covariances.push(sigma);
    }

    MhmmrParams::new(
        DVector::from_vec(pi_values),
        trans,
        regressions,
        covariances,
        TimeNorm { offset, scale },
    )
}

/// Writes per-sample posteriors for external plotting: columns `t`,
/// `tau_1..tau_K`, and the decoded state.
pub fn export_posteriors(
    timestamps: &[f64],
    post: &PosteriorSet,
    seg: &Segmentation,
    path: impl AsRef<Path>,
) -> Result<()> {
    let n = post.len();
    if timestamps.len() != n || seg.states().len() != n {
        return Err(MhmmrError::LengthMismatch {
            left: timestamps.len(),
            right: n,
        });
    }
    let k = post.num_states();
    let mut out = String::from("t");
    for s in 1..=k {
        out.push_str(&format!(",tau_{s}"));
    }
    out.push_str(",state\n");
    for i in 0..n {
        out.push_str(&fmt_f64(timestamps[i]));
        for s in 0..k {
            out.push(',');
            out.push_str(&fmt_f64(post.tau()[(i, s)]));
        }
        out.push(',');
        out.push_str(&seg.states()[i].to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a decoded segmentation: columns `t`, `state`, `confidence`.
pub fn write_segmentation(
    timestamps: &[f64],
    seg: &Segmentation,
    path: impl AsRef<Path>,
) -> Result<()> {
    if timestamps.len() != seg.states().len() {
        return Err(MhmmrError::LengthMismatch {
            left: timestamps.len(),
            right: seg.states().len(),
        });
    }
    let mut out = String::from("t,state,confidence\n");
    for i in 0..timestamps.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(timestamps[i]),
            seg.states()[i],
            fmt_f64(seg.confidences()[i])
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads back a segmentation CSV written by `write_segmentation`.
pub fn load_segmentation(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<usize>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MhmmrError::FormatVersionMismatch("empty segmentation file".into()))?;
    if header.trim() != "t,state,confidence" {
        return Err(MhmmrError::FormatVersionMismatch(format!(
            "unexpected segmentation header `{}`",
            header.trim()
        )));
    }
    let mut timestamps = Vec::new();
    let mut states = Vec::new();
    let mut confidences = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(MhmmrError::ParseError { row, col: 0 });
        }
        timestamps.push(
            fields[0]
                .trim()
                .parse::<f64>()
                .map_err(|_| MhmmrError::ParseError { row, col: 0 })?,
        );
        states.push(
            fields[1]
                .trim()
                .parse::<usize>()
                .map_err(|_| MhmmrError::ParseError { row, col: 1 })?,
        );
        confidences.push(
            fields[2]
                .trim()
                .parse::<f64>()
                .map_err(|_| MhmmrError::ParseError { row, col: 2 })?,
        );
    }
    Ok((timestamps, states, confidences))
}

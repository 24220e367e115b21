//! Logged-feedback datasets: CSV (de)serialization, seeded train/test
//! splitting and action-balanced down-sampling.
//!
//! The on-disk schema is a UTF-8, LF-terminated CSV with header
//! `coverage_alarm,capacity_alarm,action,loss,propensity`. Actions are the
//! integer codes -1 | 0 | +1, reals carry nine significant digits with `.`
//! as the decimal separator, and the propensity field may be empty when the
//! log lacks it. Saving is idempotent: save → load → save produces
//! byte-identical files.

use crate::error::Error;
use crate::seeding::{self, tags};
use crate::types::{Action, Context, LoggedSample};
use crate::Result;
use rand::seq::SliceRandom;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Expected CSV header.
pub const DATASET_HEADER: &str = "coverage_alarm,capacity_alarm,action,loss,propensity";

/// A bandit-feedback log: one sample per logged interaction, plus free-text
/// provenance (generator seed, config digest, source file) that is carried
/// in a sidecar rather than the CSV itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LoggedSample>,
    pub provenance: String,
}

impl Dataset {
    /// Wraps samples with a provenance note.
    pub fn new(samples: Vec<LoggedSample>, provenance: impl Into<String>) -> Self {
        Dataset {
            samples,
            provenance: provenance.into(),
        }
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when the log holds no samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count per action, in canonical action order.
    pub fn action_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for s in &self.samples {
            counts[s.action.index()] += 1;
        }
        counts
    }
}

/// Formats a real with nine significant digits in plain decimal notation.
///
/// Implemented by formatting the scientific representation first and then
/// shifting the decimal point, so the printed value is the correctly rounded
/// nine-digit decimal whatever the magnitude.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific float format always contains an exponent");
    let exp: i32 = exp.parse().expect("float exponent is a valid integer");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    debug_assert_eq!(digits.len(), 9);

    let mut out = String::with_capacity(16);
    out.push_str(sign);
    if exp >= 8 {
        // All nine digits sit left of the decimal point.
        out.push_str(&digits);
        for _ in 0..(exp - 8) {
            out.push('0');
        }
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        out.push_str(&digits[..split]);
        out.push('.');
        out.push_str(&digits[split..]);
    } else {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(&digits);
    }
    out
}

/// Serializes one sample as a CSV row (no trailing newline).
fn format_row(s: &LoggedSample) -> String {
    let mut row = String::with_capacity(64);
    let _ = write!(
        row,
        "{},{},{},{},",
        format_real(s.context.coverage_alarm()),
        format_real(s.context.capacity_alarm()),
        s.action.code(),
        format_real(s.loss),
    );
    if let Some(p) = s.propensity {
        row.push_str(&format_real(p));
    }
    row
}

/// Writes the dataset to `path` in the schema described at module level.
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, line: &str| -> Result<()> {
        writeln!(w, "{line}").map_err(|e| Error::io(path.display().to_string(), e))
    };
    write(&mut w, DATASET_HEADER)?;
    for s in &d.samples {
        write(&mut w, &format_row(s))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a dataset from `path`, validating the header and every row.
/// Errors carry the 1-based line number of the offending row.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path_str.clone(), e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(Error::io(path_str, e)),
        None => return Err(Error::row(path_str, 1, "missing header")),
    };
    if header.trim_end_matches('\r') != DATASET_HEADER {
        return Err(Error::row(
            path_str,
            1,
            format!("header must be exactly `{DATASET_HEADER}`"),
        ));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path_str.clone(), e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() && samples.len() + 1 == line_no {
            // A single trailing blank line after the data is tolerated.
            continue;
        }
        samples.push(parse_row(&path_str, line_no, line)?);
    }
    Ok(Dataset::new(samples, ""))
}

fn parse_row(path: &str, line_no: usize, line: &str) -> Result<LoggedSample> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 {
        return Err(Error::row(
            path,
            line_no,
            format!("expected 5 fields, found {}", fields.len()),
        ));
    }
    let real = |field: &str, name: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::row(
                    path,
                    line_no,
                    format!("{name}: not a finite real: `{field}`"),
                )
            })
    };
    let coverage = real(fields[0], "coverage_alarm")?;
    let capacity = real(fields[1], "capacity_alarm")?;
    let context =
        Context::new(coverage, capacity).map_err(|e| Error::row(path, line_no, e.to_string()))?;
    let action = fields[2]
        .parse::<i64>()
        .ok()
        .and_then(Action::from_code)
        .ok_or_else(|| {
            Error::row(
                path,
                line_no,
                format!("action must be -1, 0 or 1, got `{}`", fields[2]),
            )
        })?;
    let loss = real(fields[3], "loss")?;
    let propensity = if fields[4].is_empty() {
        None
    } else {
        Some(real(fields[4], "propensity")?)
    };
    LoggedSample::new(context, action, loss, propensity)
        .map_err(|e| Error::row(path, line_no, e.to_string()))
}

/// Train size for an `n`-sample log at the given train fraction: the
/// fraction times `n`, rounded half-up in decimal terms. The tiny nudge
/// keeps products like 0.7 × 309435 — exactly 216604.5 in decimal but a
/// hair below it in binary — rounding up as intended.
fn train_size(n: usize, train_fraction: f64) -> usize {
    let exact = train_fraction * n as f64;
    ((exact + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Splits the log into disjoint train and test parts by a seed-driven
/// uniform permutation. The train part holds `round(train_fraction * n)`
/// samples; both parts preserve the original sample order.
pub fn split_dataset(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = d.len();
    let n_train = train_size(n, train_fraction);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seeding::rng(seed, tags::SPLIT);
    indices.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &i in &indices[..n_train] {
        in_train[i] = true;
    }

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, s) in d.samples.iter().enumerate() {
        if in_train[i] {
            train.push(*s);
        } else {
            test.push(*s);
        }
    }
    let tag = |part: &str| format!("{} [{part} split seed={seed}]", d.provenance);
    Ok((
        Dataset::new(train, tag("train")),
        Dataset::new(test, tag("test")),
    ))
}

/// Down-samples the log so every action appears exactly as often as the
/// rarest one. All samples of the rarest action are kept; the surplus of
/// each other action is removed by a seed-driven uniform draw. Original
/// sample order is preserved. Errors when any action is absent.
pub fn downsample_balanced(d: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = d.action_counts();
    for a in Action::ALL {
        if counts[a.index()] == 0 {
            return Err(Error::MissingAction { action: a.name() });
        }
    }
    let target = *counts.iter().min().expect("three action counts");

    let mut rng = seeding::rng(seed, tags::DOWNSAMPLE);
    let mut keep = vec![true; d.len()];
    // Draw per action in canonical order so the result is seed-deterministic.
    for a in Action::ALL {
        let surplus = counts[a.index()] - target;
        if surplus == 0 {
            continue;
        }
        let mut idx: Vec<usize> = d
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.action == a)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..surplus] {
            keep[i] = false;
        }
    }

    let samples: Vec<LoggedSample> = d
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, s)| *s)
        .collect();
    Ok(Dataset::new(
        samples,
        format!("{} [balanced downsample seed={seed}]", d.provenance),
    ))
}

//! Series ingestion, synthetic generators, standardization and splitting.
//!
//! Two on-disk formats are read:
//!
//! * UCR archive files: one sequence per line, a class label followed by
//!   `T` values, comma or tab separated. Labels are discarded.
//! * Panel CSV: header `subject_id,t,<feature>...`, rows grouped by subject
//!   with `t` running 1, 2, ... Missing cells are rejected.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Rng, Vector};

/// Mean and (population) standard deviation of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

/// A batch of multivariate sequences. Each sequence is a list of `T`
/// vectors of length `n_features`; lengths may differ between sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBatch {
    pub name: String,
    pub n_features: usize,
    pub sequences: Vec<Vec<Vector>>,
    /// Statistics the batch was standardized with, if any.
    pub stats: Option<Vec<FeatureStats>>,
}

impl SeriesBatch {
    pub fn new(
        name: impl Into<String>,
        n_features: usize,
        sequences: Vec<Vec<Vector>>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("a batch needs at least one feature"));
        }
        for (k, seq) in sequences.iter().enumerate() {
            if let Some(bad) = seq.iter().find(|v| v.len() != n_features) {
                return Err(Error::invalid(format!(
                    "sequence {k} has a step with {} features, expected {n_features}",
                    bad.len()
                )));
            }
            if seq.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "sequence {k} has non-finite values"
                )));
            }
        }
        Ok(SeriesBatch {
            name: name.into(),
            n_features,
            sequences,
            stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Common sequence length, if all sequences share one.
    pub fn seq_len(&self) -> Option<usize> {
        let first = self.sequences.first()?.len();
        self.sequences
            .iter()
            .all(|s| s.len() == first)
            .then_some(first)
    }

    /// Total number of scalar next-step targets in the batch.
    pub fn target_count(&self) -> usize {
        self.sequences
            .iter()
            .map(|s| s.len().saturating_sub(1) * self.n_features)
            .sum()
    }

    fn subset(&self, idx: &[usize], suffix: &str) -> SeriesBatch {
        SeriesBatch {
            name: format!("{}{suffix}", self.name),
            n_features: self.n_features,
            sequences: idx.iter().map(|&k| self.sequences[k].clone()).collect(),
            stats: self.stats.clone(),
        }
    }
}

/// Inputs `x¹..x^{T−1}` and targets `x²..x^T` of one sequence.
pub fn next_step_pairs(seq: &[Vector]) -> (&[Vector], &[Vector]) {
    let t = seq.len();
    (&seq[..t.saturating_sub(1)], &seq[t.min(1)..])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }

    /// Tab if the first non-empty line contains a tab, comma otherwise.
    pub fn detect(text: &str) -> Delimiter {
        match text.lines().find(|l| !l.trim().is_empty()) {
            Some(l) if l.contains('\t') => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Reads a UCR-format file. `N = 1`; class labels are parsed and dropped.
pub fn load_ucr(path: impl AsRef<Path>, delimiter: Delimiter) -> Result<SeriesBatch> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_ucr(&text, delimiter, path)
}

/// Parses UCR text; `origin` is used for the batch name and error messages.
pub fn parse_ucr(text: &str, delimiter: Delimiter, origin: &Path) -> Result<SeriesBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter.byte())
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut sequences = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut fields = record.iter();
        let label = fields.next().unwrap_or_default();
        label.parse::<f64>().map_err(|_| {
            parse_err(
                origin,
                line,
                format!("class label `{label}` is not numeric"),
            )
        })?;
        let values = fields
            .enumerate()
            .map(|(k, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(
                            origin,
                            line,
                            format!("value {} (`{f}`) is not a finite number", k + 1),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None if values.len() < 2 => {
                return Err(parse_err(
                    origin,
                    line,
                    format!("a sequence needs at least 2 values, found {}", values.len()),
                ))
            }
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    origin,
                    line,
                    format!("expected {w} values, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        sequences.push(values.into_iter().map(|v| Vector::from(vec![v])).collect());
    }
    if sequences.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no sequences",
            origin.display()
        )));
    }
    SeriesBatch::new(dataset_name(origin), 1, sequences)
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || matches!(cell, "NA" | "na" | "NaN" | "nan" | "?")
}

/// Reads a panel CSV (`subject_id,t,f1..fN`) into a ragged batch.
pub fn load_panel(path: impl AsRef<Path>) -> Result<SeriesBatch> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_panel(&text, path)
}

pub fn parse_panel(text: &str, origin: &Path) -> Result<SeriesBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(origin, 1, e.to_string()))?
        .clone();
    if header.len() < 3 || &header[0] != "subject_id" || &header[1] != "t" {
        return Err(parse_err(
            origin,
            1,
            "header must be `subject_id,t,<feature>...` with at least one feature",
        ));
    }
    let n_features = header.len() - 2;

    struct Subject {
        id: String,
        first_line: usize,
        steps: Vec<Vector>,
    }
    let mut subjects: Vec<Subject> = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(parse_err(
                origin,
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(parse_err(origin, line, "empty subject_id"));
        }
        let t: usize = record[1].parse().map_err(|_| {
            parse_err(
                origin,
                line,
                format!("t = `{}` is not a positive integer", &record[1]),
            )
        })?;
        let mut step = Vec::with_capacity(n_features);
        for (k, cell) in record.iter().skip(2).enumerate() {
            if is_missing(cell) {
                return Err(Error::UnsupportedMissingValue {
                    path: origin.to_path_buf(),
                    line,
                    column: header[k + 2].to_string(),
                });
            }
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        origin,
                        line,
                        format!(
                            "`{cell}` in column `{}` is not a finite number",
                            &header[k + 2]
                        ),
                    )
                })?;
            step.push(v);
        }

        let continuing = subjects.last().is_some_and(|s| s.id == id);
        if !continuing {
            if !seen.insert(id.to_string()) {
                return Err(parse_err(
                    origin,
                    line,
                    format!("rows for subject `{id}` are not contiguous"),
                ));
            }
            subjects.push(Subject {
                id: id.to_string(),
                first_line: line,
                steps: Vec::new(),
            });
        }
        let subject = subjects.last_mut().expect("pushed above");
        let expected = subject.steps.len() + 1;
        if t != expected {
            return Err(parse_err(
                origin,
                line,
                format!("subject `{id}`: expected t = {expected}, found {t}"),
            ));
        }
        subject.steps.push(Vector::from(step));
    }
    if subjects.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no rows",
            origin.display()
        )));
    }
    if let Some(s) = subjects.iter().find(|s| s.steps.len() < 2) {
        return Err(parse_err(
            origin,
            s.first_line,
            format!(
                "subject `{}` has a single timestep; next-step regression needs at least two",
                s.id
            ),
        ));
    }
    SeriesBatch::new(
        dataset_name(origin),
        n_features,
        subjects.into_iter().map(|s| s.steps).collect(),
    )
}

/// Writes a univariate batch in UCR format with label 0.
pub fn write_ucr(batch: &SeriesBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if batch.n_features != 1 {
        return Err(Error::invalid("UCR format holds univariate series only"));
    }
    let mut out = String::new();
    for seq in &batch.sequences {
        out.push('0');
        for v in seq {
            out.push(',');
            out.push_str(&format_value(v[0]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a batch as a panel CSV, subjects numbered from 1.
pub fn write_panel(batch: &SeriesBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("subject_id,t");
    for k in 1..=batch.n_features {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for (s, seq) in batch.sequences.iter().enumerate() {
        for (t, v) in seq.iter().enumerate() {
            out.push_str(&format!("{},{}", s + 1, t + 1));
            for x in v.iter() {
                out.push(',');
                out.push_str(&format_value(*x));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn format_value(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Sinusoids with random frequency and phase.
    Sine,
    /// `x' = ρ x + ε`, ρ drawn per sequence from [0.5, 0.95].
    Ar1,
    /// `x' = x`: a pure copy task.
    Memory,
}

impl FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(SynthKind::Sine),
            "ar1" => Ok(SynthKind::Ar1),
            "memory" => Ok(SynthKind::Memory),
            other => Err(Error::invalid(format!(
                "unknown synthetic kind `{other}` (expected sine, ar1 or memory)"
            ))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Sine => "sine",
            SynthKind::Ar1 => "ar1",
            SynthKind::Memory => "memory",
        })
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub count: usize,
    pub seq_len: usize,
    pub n_features: usize,
    pub noise_var: f64,
    pub seed: u64,
}

/// Generates a synthetic batch. For `sine` and `memory` the noise is
/// additive observation noise; for `ar1` it is the innovation variance.
pub fn synth(spec: &SynthSpec) -> Result<SeriesBatch> {
    Ok(synth_with_params(spec)?.0)
}

/// As [`synth`], also returning the per-sequence AR coefficient for `ar1`
/// (empty for the other kinds).
pub fn synth_with_params(spec: &SynthSpec) -> Result<(SeriesBatch, Vec<f64>)> {
    if spec.count < 2 || spec.seq_len < 2 {
        return Err(Error::invalid(
            "synthetic batches need count >= 2 and T >= 2",
        ));
    }
    if spec.n_features == 0 {
        return Err(Error::invalid(
            "synthetic batches need at least one feature",
        ));
    }
    if !(spec.noise_var >= 0.0) || !spec.noise_var.is_finite() {
        return Err(Error::invalid("noise_var must be finite and >= 0"));
    }
    let mut rng = Rng::new(spec.seed);
    let noise_sd = spec.noise_var.sqrt();
    let (t_len, n) = (spec.seq_len, spec.n_features);
    let mut rhos = Vec::new();
    let mut sequences = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut seq = vec![Vector::zeros(n); t_len];
        match spec.kind {
            SynthKind::Sine => {
                for k in 0..n {
                    let freq = rng.uniform_range(0.02, 0.2);
                    let phase = rng.uniform_range(0.0, 2.0 * PI);
                    for (t, step) in seq.iter_mut().enumerate() {
                        step[k] = (2.0 * PI * freq * t as f64 + phase).sin()
                            + noise_sd * rng.standard_normal();
                    }
                }
            }
            SynthKind::Ar1 => {
                let rho = rng.uniform_range(0.5, 0.95);
                rhos.push(rho);
                let start_sd = if spec.noise_var > 0.0 {
                    (spec.noise_var / (1.0 - rho * rho)).sqrt()
                } else {
                    1.0
                };
                for k in 0..n {
                    seq[0][k] = start_sd * rng.standard_normal();
                    for t in 1..t_len {
                        seq[t][k] = rho * seq[t - 1][k] + noise_sd * rng.standard_normal();
                    }
                }
            }
            SynthKind::Memory => {
                for k in 0..n {
                    let level = rng.standard_normal();
                    for step in seq.iter_mut() {
                        step[k] = level + noise_sd * rng.standard_normal();
                    }
                }
            }
        }
        sequences.push(seq);
    }
    let name = format!("synth-{}", spec.kind);
    Ok((SeriesBatch::new(name, n, sequences)?, rhos))
}

/// Per-feature mean and population standard deviation over every timestep
/// of every sequence.
pub fn fit_stats(batch: &SeriesBatch) -> Result<Vec<FeatureStats>> {
    let n = batch.n_features;
    let count = batch.sequences.iter().map(|s| s.len()).sum::<usize>();
    if count == 0 {
        return Err(Error::invalid("cannot fit statistics on an empty batch"));
    }
    let mut mean = vec![0.0; n];
    for v in batch.sequences.iter().flatten() {
        for k in 0..n {
            mean[k] += v[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; n];
    for v in batch.sequences.iter().flatten() {
        for k in 0..n {
            var[k] += (v[k] - mean[k]).powi(2);
        }
    }
    (0..n)
        .map(|k| {
            let std = (var[k] / count as f64).sqrt();
            if std <= 1e-12 {
                Err(Error::ConstantFeature { feature: k, std })
            } else {
                Ok(FeatureStats { mean: mean[k], std })
            }
        })
        .collect()
}

/// Standardizes with statistics fitted on `batch` itself.
pub fn standardize(batch: &SeriesBatch) -> Result<SeriesBatch> {
    let stats = fit_stats(batch)?;
    apply_stats(batch, &stats)
}

/// Standardizes with externally fitted statistics (e.g. from the training
/// split).
pub fn apply_stats(batch: &SeriesBatch, stats: &[FeatureStats]) -> Result<SeriesBatch> {
    if stats.len() != batch.n_features {
        return Err(Error::invalid(format!(
            "{} feature statistics for a batch with {} features",
            stats.len(),
            batch.n_features
        )));
    }
    let sequences = batch
        .sequences
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|v| {
                    v.iter()
                        .zip(stats)
                        .map(|(x, s)| (x - s.mean) / s.std)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(SeriesBatch {
        name: batch.name.clone(),
        n_features: batch.n_features,
        sequences,
        stats: Some(stats.to_vec()),
    })
}

/// Inverse of [`apply_stats`] using the stored statistics.
pub fn unstandardize(batch: &SeriesBatch) -> Result<SeriesBatch> {
    let stats = batch
        .stats
        .as_ref()
        .ok_or_else(|| Error::invalid("batch carries no standardization statistics"))?;
    let sequences = batch
        .sequences
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|v| {
                    v.iter()
                        .zip(stats)
                        .map(|(x, s)| x * s.std + s.mean)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(SeriesBatch {
        name: batch.name.clone(),
        n_features: batch.n_features,
        sequences,
        stats: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.15,
            seed: 0,
        }
    }
}

/// Random sequence-level partition into training and validation parts. Both
/// parts keep the original sequence order.
pub fn split(batch: &SeriesBatch, spec: &SplitSpec) -> Result<(SeriesBatch, SeriesBatch)> {
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(Error::invalid(format!(
            "val_fraction must be in [0, 1), got {}",
            spec.val_fraction
        )));
    }
    if batch.len() < 2 {
        return Err(Error::invalid("splitting needs at least two sequences"));
    }
    let n = batch.len();
    let n_val = (spec.val_fraction * n as f64).round() as usize;
    if n_val >= n {
        return Err(Error::invalid(
            "validation fraction leaves no training sequences",
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(spec.seed).shuffle(&mut idx);
    let mut val: Vec<usize> = idx[..n_val].to_vec();
    let mut train: Vec<usize> = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((batch.subset(&train, "/train"), batch.subset(&val, "/val")))
}

/// Splits, fits statistics on the training part, and standardizes both parts
/// with them.
pub fn split_standardized(
    batch: &SeriesBatch,
    spec: &SplitSpec,
) -> Result<(SeriesBatch, SeriesBatch)> {
    let (train, val) = split(batch, spec)?;
    let stats = fit_stats(&train)?;
    Ok((apply_stats(&train, &stats)?, apply_stats(&val, &stats)?))
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Ucr {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        delimiter: Option<Delimiter>,
    },
    Panel {
        train: PathBuf,
        test: PathBuf,
    },
    Synth {
        #[serde(flatten)]
        spec: SynthSpec,
        test_count: usize,
    },
}

impl DatasetSource {
    /// Raw (unstandardized) training and test batches.
    pub fn load(&self, base: &Path) -> Result<(SeriesBatch, SeriesBatch)> {
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        match self {
            DatasetSource::Ucr {
                train,
                test,
                delimiter,
            } => {
                let load = |p: &PathBuf| -> Result<SeriesBatch> {
                    let path = resolve(p);
                    let text = read_text(&path)?;
                    let delim = delimiter.unwrap_or_else(|| Delimiter::detect(&text));
                    parse_ucr(&text, delim, &path)
                };
                Ok((load(train)?, load(test)?))
            }
            DatasetSource::Panel { train, test } => {
                Ok((load_panel(resolve(train))?, load_panel(resolve(test))?))
            }
            DatasetSource::Synth { spec, test_count } => {
                let train = synth(spec)?;
                let test_spec = SynthSpec {
                    count: *test_count,
                    seed: spec.seed ^ 0x07e5_75e7,
                    ..*spec
                };
                let mut test = synth(&test_spec)?;
                test.name = format!("{}/test", test.name);
                Ok((train, test))
            }
        }
    }
}

//! Initializer-by-seed training grids.
//!
//! An [`ExperimentSpec`] names one dataset, a list of initializers and a list
//! of seeds. Every (initializer, seed) pair is one independent training run;
//! runs execute in parallel and are reported in grid order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{ActivationPreset, CellKind, LstmWeights};
use crate::data::{apply_stats, fit_stats, split, DatasetSource, SeriesBatch, SplitSpec};
use crate::error::{Error, Result};
use crate::init::{
    baseline_normalized, baseline_orthogonal, catalogue_config, sample_weights, VarianceConfig,
};
use crate::math::Rng;
use crate::train::{evaluate_mse, train, TrainConfig, TrainTrace};

/// How a run's weights are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Initializer {
    /// Catalogue configuration 1..=4 (peephole, sigmoid gates).
    Proposed(usize),
    Normalized,
    Orthogonal,
    /// A variance config file, written `file:<path>`.
    Custom(PathBuf),
}

impl Initializer {
    pub const TABLE: [Initializer; 6] = [
        Initializer::Proposed(1),
        Initializer::Proposed(2),
        Initializer::Proposed(3),
        Initializer::Proposed(4),
        Initializer::Normalized,
        Initializer::Orthogonal,
    ];

    /// Name used in file names and summary rows.
    pub fn name(&self) -> String {
        match self {
            Initializer::Proposed(k) => format!("proposed-{k}"),
            Initializer::Normalized => "normalized".into(),
            Initializer::Orthogonal => "orthogonal".into(),
            Initializer::Custom(p) => format!(
                "custom-{}",
                p.file_stem()
                    .map_or("config".into(), |s| s.to_string_lossy())
            ),
        }
    }

    /// Summary row order: proposed 1-4, normalized, orthogonal, then custom.
    pub fn rank(&self) -> usize {
        match self {
            Initializer::Proposed(k) => *k,
            Initializer::Normalized => 5,
            Initializer::Orthogonal => 6,
            Initializer::Custom(_) => 7,
        }
    }

    pub fn is_proposed(&self) -> bool {
        matches!(self, Initializer::Proposed(_))
    }

    /// Draws `n × n` weights.
    pub fn sample(
        &self,
        n: usize,
        kind: CellKind,
        base: &Path,
        rng: &mut Rng,
    ) -> Result<LstmWeights> {
        match self {
            Initializer::Proposed(k) => {
                if kind != CellKind::Peephole {
                    return Err(Error::invalid(format!(
                        "{} is a peephole configuration; the experiment uses {kind:?} cells",
                        self.name()
                    )));
                }
                sample_weights(&catalogue_config(*k, n)?, n, n, rng)
            }
            Initializer::Normalized => baseline_normalized(n, n, kind, rng),
            Initializer::Orthogonal => baseline_orthogonal(n, n, kind, rng),
            Initializer::Custom(path) => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let cfg = VarianceConfig::load(&path)?;
                if cfg.kind != kind {
                    return Err(Error::invalid(format!(
                        "{} holds a {:?} config; the experiment uses {kind:?} cells",
                        path.display(),
                        cfg.kind
                    )));
                }
                let cfg = if cfg.n == n { cfg } else { cfg.rescaled(n)? };
                sample_weights(&cfg, n, n, rng)
            }
        }
    }
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Initializer::Custom(p) => write!(f, "file:{}", p.display()),
            other => f.write_str(&other.name()),
        }
    }
}

impl FromStr for Initializer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Initializer::Custom(PathBuf::from(path)));
        }
        match s {
            "normalized" => Ok(Initializer::Normalized),
            "orthogonal" => Ok(Initializer::Orthogonal),
            _ => s
                .strip_prefix("proposed-")
                .and_then(|k| k.parse().ok())
                .filter(|k| (1..=4).contains(k))
                .map(Initializer::Proposed)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown initializer `{s}` (expected proposed-1..4, normalized, orthogonal or file:<path>)"
                    ))
                }),
        }
    }
}

impl TryFrom<String> for Initializer {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Initializer> for String {
    fn from(i: Initializer) -> String {
        i.to_string()
    }
}

fn default_cell() -> CellKind {
    CellKind::Peephole
}

fn default_activation() -> ActivationPreset {
    ActivationPreset::Regression
}

/// A declarative training grid. Relative dataset and config paths are
/// resolved against the directory of the experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub initializers: Vec<Initializer>,
    #[serde(default = "default_cell")]
    pub cell: CellKind,
    #[serde(default = "default_activation")]
    pub activation: ActivationPreset,
    /// `seed` is replaced by each run's seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentSpec::from_json(&text)
    }

    pub fn check(&self) -> Result<()> {
        if self.initializers.is_empty() {
            return Err(Error::invalid(
                "an experiment needs at least one initializer",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("an experiment needs at least one seed"));
        }
        self.train.check()
    }
}

/// Standardized train/validation/test batches; statistics come from the
/// training part only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: SeriesBatch,
    pub val: SeriesBatch,
    pub test: SeriesBatch,
}

pub fn prepare(
    source: &DatasetSource,
    split_spec: &SplitSpec,
    base: &Path,
) -> Result<PreparedData> {
    let (raw_train, raw_test) = source.load(base)?;
    if raw_test.n_features != raw_train.n_features {
        return Err(Error::invalid(format!(
            "train has {} features, test has {}",
            raw_train.n_features, raw_test.n_features
        )));
    }
    let (tr, va) = split(&raw_train, split_spec)?;
    let stats = fit_stats(&tr)?;
    Ok(PreparedData {
        train: apply_stats(&tr, &stats)?,
        val: apply_stats(&va, &stats)?,
        test: apply_stats(&raw_test, &stats)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub initializer: Initializer,
    pub seed: u64,
    pub trace: TrainTrace,
}

impl RunResult {
    pub fn file_stem(&self) -> String {
        format!("{}_seed{}", self.initializer.name(), self.seed)
    }

    /// Final training loss, `+inf` for a diverged run.
    pub fn final_train_loss(&self) -> f64 {
        match (&self.trace.diverged, self.trace.final_train_loss()) {
            (None, Some(l)) => l,
            _ => f64::INFINITY,
        }
    }

    /// Test MSE, `+inf` for a diverged run.
    pub fn test_mse(&self) -> f64 {
        self.trace.final_test_mse.unwrap_or(f64::INFINITY)
    }
}

/// One training run of the grid.
pub fn run_one(
    spec: &ExperimentSpec,
    data: &PreparedData,
    initializer: &Initializer,
    seed: u64,
    base: &Path,
) -> Result<RunResult> {
    let n = data.train.n_features;
    let mut rng = Rng::new(seed);
    let w0 = initializer.sample(n, spec.cell, base, &mut rng)?;
    let tc = TrainConfig { seed, ..spec.train };
    let act = spec.activation.spec();
    let (w, mut trace) = train(&w0, &data.train, &data.val, &tc, act, spec.cell)?;
    trace.initializer = initializer.name();
    if trace.diverged.is_none() {
        trace.final_test_mse = match evaluate_mse(&w, &data.test, act, spec.cell) {
            Ok(mse) if mse.is_finite() => Some(mse),
            Ok(_) | Err(Error::NumericOverflow { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(RunResult {
        initializer: initializer.clone(),
        seed,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub initializer: String,
    pub runs: usize,
    pub diverged: usize,
    pub median_train_loss: f64,
    pub mean_train_loss: f64,
    pub median_test_mse: f64,
    pub mean_test_mse: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub dataset: String,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

impl BenchReport {
    pub fn row(&self, initializer: &Initializer) -> Option<&SummaryRow> {
        let name = initializer.name();
        self.summary.iter().find(|r| r.initializer == name)
    }

    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.trace.diverged.is_some())
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "initializer,runs,diverged,median_train_loss,mean_train_loss,median_test_mse,mean_test_mse\n",
        );
        for r in &self.summary {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{:?},{:?}\n",
                r.initializer,
                r.runs,
                r.diverged,
                r.median_train_loss,
                r.mean_train_loss,
                r.median_test_mse,
                r.mean_test_mse
            ));
        }
        out
    }

    /// Per-run trace CSVs and JSON sidecars plus `summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for run in &self.runs {
            let stem = run.file_stem();
            run.trace.write_csv(dir.join(format!("{stem}.csv")))?;
            run.trace.write_sidecar(dir.join(format!("{stem}.json")))?;
        }
        let path = dir.join("summary.csv");
        std::fs::write(&path, self.summary_csv()).map_err(|e| Error::io(&path, e))
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset: {}", self.dataset)?;
        writeln!(
            f,
            "{:<18} {:>5} {:>5} {:>13} {:>13} {:>13} {:>13}",
            "initializer", "runs", "div", "med train", "mean train", "med test", "mean test"
        )?;
        for r in &self.summary {
            writeln!(
                f,
                "{:<18} {:>5} {:>5} {:>13.6} {:>13.6} {:>13.6} {:>13.6}",
                r.initializer,
                r.runs,
                r.diverged,
                r.median_train_loss,
                r.mean_train_loss,
                r.median_test_mse,
                r.mean_test_mse
            )?;
        }
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median and mean over seeds per initializer, in summary row order.
pub fn summarize(runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut inits: Vec<&Initializer> = Vec::new();
    for r in runs {
        if !inits.contains(&&r.initializer) {
            inits.push(&r.initializer);
        }
    }
    inits.sort_by_key(|i| i.rank());
    inits
        .into_iter()
        .map(|init| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| &r.initializer == init).collect();
            let train: Vec<f64> = mine.iter().map(|r| r.final_train_loss()).collect();
            let test: Vec<f64> = mine.iter().map(|r| r.test_mse()).collect();
            SummaryRow {
                initializer: init.name(),
                runs: mine.len(),
                diverged: mine.iter().filter(|r| r.trace.diverged.is_some()).count(),
                median_train_loss: median(&train),
                mean_train_loss: mean(&train),
                median_test_mse: median(&test),
                mean_test_mse: mean(&test),
            }
        })
        .collect()
}

/// Runs the whole grid. `base` resolves relative dataset and config paths.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path) -> Result<BenchReport> {
    spec.check()?;
    let data = prepare(&spec.dataset, &spec.split, base)?;
    let grid: Vec<(&Initializer, u64)> = spec
        .initializers
        .iter()
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<RunResult> = grid
        .par_iter()
        .map(|(init, seed)| run_one(spec, &data, init, *seed, base))
        .collect::<Result<_>>()?;
    Ok(BenchReport {
        dataset: data.train.name.trim_end_matches("/train").to_string(),
        summary: summarize(&runs),
        runs,
    })
}

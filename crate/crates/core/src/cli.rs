//! Command runner behind the `lstm-varinit` binary.
//!
//! Exit codes are uniform across subcommands: 0 success (condition
//! satisfied, check passed), 1 domain-negative outcome (condition violated,
//! check failed, probe drift flagged, a run diverged), 2 usage, parse or I/O
//! error.
//!
//! `VARINIT_SEED`, when set, replaces the default seed of `var-probe`,
//! `gradcheck` and `synth` (an explicit `--seed` still wins) and replaces the
//! seed list of a `bench` experiment.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{run_experiment, ExperimentSpec};
use crate::cell::{ActivationPreset, CellKind};
use crate::data::{synth, write_panel, write_ucr, SynthKind, SynthSpec};
use crate::error::{Error, Result};
use crate::init::{catalogue_config, validate, GateMode, VarianceConfig, DEFAULT_TOLERANCE};
use crate::math::Rng;
use crate::probe::{probe_single_step, probe_stationarity};
use crate::train::{gradcheck_with_fault, random_problem};

pub const SEED_ENV: &str = "VARINIT_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Gradient checks pass below this worst relative error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "lstm-varinit",
    version,
    about = "Variance-preserving LSTM initialization: checks, probes and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a variance config against its initialization condition.
    InitCheck {
        /// Config JSON file, or a built-in profile: proposed-1..4,
        /// normalized, orthogonal.
        config: String,
        /// Input dimension; file configs are rescaled to it.
        #[arg(long)]
        n: Option<usize>,
        /// Absolute tolerance on the equality clause.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Monte-Carlo estimate of Var(h) and Var(c) at initialization. Exits 1
    /// when the multi-step probe flags cell-variance drift.
    VarProbe {
        config: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Also iterate the cell for this many steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Trials for the multi-step probe.
        #[arg(long, default_value_t = 10_000)]
        steps_trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the true logistic/tanh activations instead of the linearized
        /// ones (reported only).
        #[arg(long)]
        nonlinear: bool,
        #[arg(long)]
        json: bool,
    },
    /// Compare BPTT gradients with central differences on a random problem.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "peephole")]
        kind: KindArg,
        #[arg(long, default_value = "classic")]
        act: ActArg,
        /// Hidden units (equal to the input dimension).
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Sequence length.
        #[arg(long, default_value_t = 5)]
        t: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Perturb one analytic gradient entry before comparing.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Train every (initializer, seed) pair of an experiment file.
    Bench {
        spec: PathBuf,
        /// Override the experiment's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write a synthetic dataset (UCR format for one feature, panel CSV
    /// otherwise).
    Synth {
        #[arg(long, default_value = "sine")]
        kind: SynthArg,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 50)]
        seq_len: usize,
        #[arg(long, default_value_t = 1)]
        n_features: usize,
        #[arg(long, default_value_t = 0.01)]
        noise_var: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Traditional,
    Peephole,
}

impl From<KindArg> for CellKind {
    fn from(k: KindArg) -> CellKind {
        match k {
            KindArg::Traditional => CellKind::Traditional,
            KindArg::Peephole => CellKind::Peephole,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActArg {
    Regression,
    Classic,
    Linearized,
    Identity,
}

impl From<ActArg> for ActivationPreset {
    fn from(a: ActArg) -> ActivationPreset {
        match a {
            ActArg::Regression => ActivationPreset::Regression,
            ActArg::Classic => ActivationPreset::Classic,
            ActArg::Linearized => ActivationPreset::Linearized,
            ActArg::Identity => ActivationPreset::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthArg {
    Sine,
    Ar1,
    Memory,
}

impl From<SynthArg> for SynthKind {
    fn from(s: SynthArg) -> SynthKind {
        match s {
            SynthArg::Sine => SynthKind::Sine,
            SynthArg::Ar1 => SynthKind::Ar1,
            SynthArg::Memory => SynthKind::Memory,
        }
    }
}

/// Exit code for an error: domain-negative outcomes give 1, everything
/// else (bad input, parse and I/O failures) gives 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ConditionViolation { .. } | Error::NumericOverflow { .. } => EXIT_NEGATIVE,
        _ => EXIT_USAGE,
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))
        }),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, default: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(default),
    })
}

/// A built-in profile name or a JSON file, optionally rescaled to `n`.
pub fn resolve_config(spec: &str, n: Option<usize>) -> Result<VarianceConfig> {
    let builtin_n = n.unwrap_or(1);
    if let Some(k) = spec.strip_prefix("proposed-") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::invalid(format!("unknown built-in config `{spec}`")))?;
        return catalogue_config(k, builtin_n);
    }
    match spec {
        // Orthogonal recurrent matrices have entry variance 1/n as well.
        "normalized" | "orthogonal" => Ok(VarianceConfig::normalized_profile(
            builtin_n,
            CellKind::Peephole,
            GateMode::SigmoidLinearized,
        )),
        path => {
            let cfg = VarianceConfig::load(path)?;
            match n {
                Some(n) if n != cfg.n => cfg.rescaled(n),
                _ => Ok(cfg),
            }
        }
    }
}

/// Parses `args` (program name first), runs the command, writes to `out`
/// and `err`, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::InitCheck {
            config,
            n,
            tol,
            json,
        } => {
            let cfg = resolve_config(&config, n)?;
            let report = validate(&cfg, tol)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err)?;
            } else {
                writeln!(out, "{report}").map_err(io_err)?;
                if !report.satisfied {
                    writeln!(out, "violated: {}", report.violated_clauses().join(", "))
                        .map_err(io_err)?;
                }
            }
            Ok(if report.satisfied {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            })
        }
        Command::VarProbe {
            config,
            n,
            trials,
            steps,
            steps_trials,
            seed,
            nonlinear,
            json,
        } => {
            let cfg = resolve_config(&config, n)?;
            let n = cfg.n;
            let mut rng = Rng::new(resolve_seed(seed, 0)?);
            let single = probe_single_step(&cfg, n, trials, &mut rng, !nonlinear)?;
            let multi = match steps {
                Some(s) => Some(probe_stationarity(&cfg, n, s, steps_trials, &mut rng)?),
                None => None,
            };
            if json {
                let doc = serde_json::json!({ "single_step": single, "stationarity": multi });
                writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).map_err(io_err)?;
            } else {
                write!(out, "{single}").map_err(io_err)?;
                if let Some(m) = &multi {
                    writeln!(out).map_err(io_err)?;
                    write!(out, "{m}").map_err(io_err)?;
                }
            }
            let drifted = multi.as_ref().is_some_and(|m| m.drift_flagged);
            Ok(if drifted { EXIT_NEGATIVE } else { EXIT_OK })
        }
        Command::Gradcheck {
            seed,
            kind,
            act,
            m,
            t,
            eps,
            corrupt,
        } => {
            let kind = CellKind::from(kind);
            let preset = ActivationPreset::from(act);
            let seed = resolve_seed(seed, 0)?;
            let (w, xs, ys) = random_problem(seed, kind, m, t)?;
            let gc = gradcheck_with_fault(&w, &xs, &ys, preset.spec(), kind, eps, |g| {
                if corrupt {
                    g.wf.as_mut_slice()[0] += 1e-3;
                }
            })?;
            let pass = gc.max_rel_err < GRADCHECK_THRESHOLD;
            writeln!(
                out,
                "{} m={m} t={t} seed={seed} {}: max relative error {:.3e} in {}[{}] (analytic {:.6e}, numeric {:.6e}) {}",
                preset.name(),
                match kind {
                    CellKind::Traditional => "traditional",
                    CellKind::Peephole => "peephole",
                },
                gc.max_rel_err,
                gc.param,
                gc.index,
                gc.analytic,
                gc.numeric,
                if pass { "PASS" } else { "FAIL" }
            )
            .map_err(io_err)?;
            Ok(if pass { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Bench {
            spec,
            out: out_dir,
            epochs,
        } => {
            let mut exp = ExperimentSpec::load(&spec)?;
            if let Some(s) = env_seed()? {
                exp.seeds = vec![s];
            }
            if let Some(e) = epochs {
                exp.train.epochs = e;
            }
            let base = spec.parent().unwrap_or(Path::new("."));
            let dir = out_dir.unwrap_or_else(|| exp.output_dir.clone());
            let report = run_experiment(&exp, base)?;
            report.write(&dir)?;
            write!(out, "{report}").map_err(io_err)?;
            writeln!(
                out,
                "wrote {} runs and summary.csv to {}",
                report.runs.len(),
                dir.display()
            )
            .map_err(io_err)?;
            for r in report.runs.iter().filter(|r| r.trace.diverged.is_some()) {
                let d = r.trace.diverged.as_ref().expect("filtered");
                writeln!(
                    out,
                    "diverged: {} at epoch {}: {}",
                    r.file_stem(),
                    d.epoch,
                    d.reason
                )
                .map_err(io_err)?;
            }
            Ok(if report.any_diverged() {
                EXIT_NEGATIVE
            } else {
                EXIT_OK
            })
        }
        Command::Synth {
            kind,
            count,
            seq_len,
            n_features,
            noise_var,
            seed,
            out: path,
        } => {
            let spec = SynthSpec {
                kind: kind.into(),
                count,
                seq_len,
                n_features,
                noise_var,
                seed: resolve_seed(seed, 0)?,
            };
            let batch = synth(&spec)?;
            let format = if n_features == 1 {
                write_ucr(&batch, &path)?;
                "ucr"
            } else {
                write_panel(&batch, &path)?;
                "panel"
            };
            writeln!(
                out,
                "wrote {count} {} sequences (T={seq_len}, N={n_features}, {format}) to {}",
                spec.kind,
                path.display()
            )
            .map_err(io_err)?;
            Ok(EXIT_OK)
        }
    }
}

//! Monte-Carlo estimates of the hidden-output and cell-state variance of a
//! freshly initialized cell.
//!
//! Each trial draws its own weights from a [`VarianceConfig`], an input
//! `x ~ N(0, 1)ⁿ`, sets `h' = x` (the recurrent value is assumed to be an
//! exact estimate of the input) and `c' ~ N(0, σ²_c)` at the predicted
//! stationary cell variance. All entries of all trials are pooled.
//!
//! Trials run in parallel. Trial `k` draws from substream `k` of a master seed
//! taken from the caller's generator, and per-trial sums are reduced in trial
//! order, so the report does not depend on scheduling.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{peepholes_for, step_at, ActivationSpec, GateActivation, Squash};
use crate::error::{Error, Result};
use crate::init::{
    sample_unchecked, stationary_cell_variance, validate, GateMode, VarianceConfig,
    WeightDistribution, DEFAULT_TOLERANCE,
};
use crate::math::{gaussian, Rng, Vector};

/// Fewest trials a probe accepts.
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    SingleStep,
    Stationarity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub n: usize,
    pub trials: usize,
    pub linearized: bool,
    /// Whether `cfg` satisfies its initialization condition. The probe runs
    /// either way; `None` when the condition cannot be evaluated.
    pub condition_satisfied: Option<bool>,
    pub est_var_h: f64,
    pub est_var_c: f64,
    pub predicted_var_c: f64,
    /// `|est_var_h − 1|`
    pub rel_err_h: f64,
    /// `|est_var_c − predicted_var_c| / predicted_var_c`
    pub rel_err_c: f64,
    /// Standard error of `est_var_h`, from the spread of per-trial estimates.
    pub se_var_h: f64,
    /// Var(h) over inputs with one weight draw held fixed (single-step only).
    pub fixed_weight_var_h: Option<f64>,
    /// Var(c) after each step (stationarity only).
    pub var_c_trajectory: Vec<f64>,
    pub var_h_trajectory: Vec<f64>,
    /// Largest `|Var(cₜ) − predicted| / predicted` along the trajectory.
    pub max_drift_c: Option<f64>,
    /// First step (1-based) at which some trial produced a non-finite value.
    pub diverged_at_step: Option<usize>,
    /// Drift above 100% or divergence.
    pub drift_flagged: bool,
}

impl ProbeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("probe report serializes") + "\n"
    }
}

/// Fixed-point for ordinary magnitudes, scientific otherwise.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{v:>14.6e}")
    } else {
        format!("{v:>14.6}")
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            ProbeMode::SingleStep => "single-step",
            ProbeMode::Stationarity => "stationarity",
        };
        writeln!(f, "{:<22}{}", "mode", mode)?;
        writeln!(f, "{:<22}{}", "n", self.n)?;
        writeln!(f, "{:<22}{}", "trials", self.trials)?;
        writeln!(f, "{:<22}{}", "linearized", self.linearized)?;
        let cond = match self.condition_satisfied {
            Some(true) => "satisfied",
            Some(false) => "violated",
            None => "n/a",
        };
        writeln!(f, "{:<22}{}", "condition", cond)?;
        writeln!(f, "{:<22}{}", "est Var(h)", num(self.est_var_h))?;
        writeln!(f, "{:<22}{}", "  se", num(self.se_var_h))?;
        writeln!(f, "{:<22}{}", "  |Var(h) - 1|", num(self.rel_err_h))?;
        if let Some(v) = self.fixed_weight_var_h {
            writeln!(f, "{:<22}{}", "  fixed-weight Var(h)", num(v))?;
        }
        writeln!(f, "{:<22}{}", "est Var(c)", num(self.est_var_c))?;
        writeln!(f, "{:<22}{}", "predicted Var(c)", num(self.predicted_var_c))?;
        writeln!(f, "{:<22}{}", "  rel err", num(self.rel_err_c))?;
        if self.mode == ProbeMode::Stationarity {
            writeln!(f)?;
            writeln!(f, "{:>6} {:>14} {:>14}", "step", "Var(c)", "Var(h)")?;
            for (t, (vc, vh)) in self
                .var_c_trajectory
                .iter()
                .zip(&self.var_h_trajectory)
                .enumerate()
            {
                writeln!(f, "{:>6} {} {}", t + 1, num(*vc), num(*vh))?;
            }
            if let Some(d) = self.max_drift_c {
                writeln!(f, "{:<22}{}", "max drift", num(d))?;
            }
            if let Some(s) = self.diverged_at_step {
                writeln!(f, "diverged at step {s}")?;
            }
            if self.drift_flagged {
                writeln!(f, "DRIFT FLAGGED")?;
            }
        }
        Ok(())
    }
}

/// Activations the probe runs the cell with.
pub fn probe_activation(mode: GateMode, linearized: bool) -> ActivationSpec {
    if !linearized {
        return ActivationSpec::CLASSIC;
    }
    let gate = match mode {
        GateMode::Identity => GateActivation::Identity,
        GateMode::SigmoidLinearized => GateActivation::LinearizedSigmoid,
    };
    ActivationSpec {
        gate,
        modulation: Squash::Identity,
        output: Squash::Identity,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    h: f64,
    h2: f64,
    c: f64,
    c2: f64,
}

impl Sums {
    fn add(&mut self, h: &[f64], c: &[f64]) {
        for (&hk, &ck) in h.iter().zip(c) {
            self.h += hk;
            self.h2 += hk * hk;
            self.c += ck;
            self.c2 += ck * ck;
        }
    }

    fn merge(mut self, o: &Sums) -> Sums {
        self.h += o.h;
        self.h2 += o.h2;
        self.c += o.c;
        self.c2 += o.c2;
        self
    }
}

fn pooled_var(sum: f64, sum2: f64, count: f64) -> f64 {
    let mean = sum / count;
    (sum2 / count - mean * mean).max(0.0)
}

/// Standard error of the pooled Var(h), treating trials as the independent
/// units (entries within a trial share weights).
fn trial_se(per_trial: &[Sums], n: usize, pooled_mean: f64) -> f64 {
    let k = per_trial.len() as f64;
    let estimates: Vec<f64> = per_trial
        .iter()
        .map(|s| {
            let nn = n as f64;
            s.h2 / nn - 2.0 * pooled_mean * s.h / nn + pooled_mean * pooled_mean
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

struct Setup {
    act: ActivationSpec,
    predicted: f64,
    condition: Option<bool>,
}

fn setup(cfg: &VarianceConfig, n: usize, trials: usize, linearized: bool) -> Result<Setup> {
    cfg.check()?;
    if n == 0 || cfg.n != n {
        return Err(Error::invalid(format!(
            "probe dimension {n} does not match the config's N = {}",
            cfg.n
        )));
    }
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!(
            "a probe needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let predicted = stationary_cell_variance(cfg)?;
    if !(predicted > 0.0) || !predicted.is_finite() {
        return Err(Error::invalid(format!(
            "predicted cell variance {predicted} is not positive"
        )));
    }
    let condition = validate(cfg, DEFAULT_TOLERANCE).ok().map(|r| r.satisfied);
    Ok(Setup {
        act: probe_activation(cfg.gate_mode, linearized),
        predicted,
        condition,
    })
}

/// One cell step per trial with fresh weights, input and previous cell state.
pub fn probe_single_step(
    cfg: &VarianceConfig,
    n: usize,
    trials: usize,
    rng: &mut Rng,
    linearized: bool,
) -> Result<ProbeReport> {
    let s = setup(cfg, n, trials, linearized)?;
    let master = rng.next_u64();
    let act = s.act;
    let predicted = s.predicted;

    let per_trial: Vec<Sums> = (0..trials as u64)
        .into_par_iter()
        .map(|k| -> Result<Sums> {
            let mut r = Rng::substream(master, k);
            let w = sample_unchecked(cfg, n, n, &mut r, WeightDistribution::Gaussian)?;
            let x = gaussian(&mut r, 0.0, 1.0, n)?;
            let c_prev = gaussian(&mut r, 0.0, predicted, n)?;
            let peep = peepholes_for(&w, cfg.kind)?;
            let st = step_at(&w, peep, &x, &x, &c_prev, act, 0)?;
            let mut sums = Sums::default();
            sums.add(&st.h, &st.c);
            Ok(sums)
        })
        .collect::<Result<_>>()?;

    let total = per_trial.iter().fold(Sums::default(), |a, b| a.merge(b));
    let count = (trials * n) as f64;
    let est_var_h = pooled_var(total.h, total.h2, count);
    let est_var_c = pooled_var(total.c, total.c2, count);
    let se_var_h = trial_se(&per_trial, n, total.h / count);
    let fixed = fixed_weight_var_h(cfg, n, trials, master, act, predicted)?;

    Ok(ProbeReport {
        mode: ProbeMode::SingleStep,
        n,
        trials,
        linearized,
        condition_satisfied: s.condition,
        est_var_h,
        est_var_c,
        predicted_var_c: predicted,
        rel_err_h: (est_var_h - 1.0).abs(),
        rel_err_c: (est_var_c - predicted).abs() / predicted,
        se_var_h,
        fixed_weight_var_h: Some(fixed),
        var_c_trajectory: Vec::new(),
        var_h_trajectory: Vec::new(),
        max_drift_c: None,
        diverged_at_step: None,
        drift_flagged: false,
    })
}

/// Var(h) over `trials` inputs with a single weight draw.
fn fixed_weight_var_h(
    cfg: &VarianceConfig,
    n: usize,
    trials: usize,
    master: u64,
    act: ActivationSpec,
    predicted: f64,
) -> Result<f64> {
    let mut r = Rng::substream(master, u64::MAX);
    let w = sample_unchecked(cfg, n, n, &mut r, WeightDistribution::Gaussian)?;
    let peep = peepholes_for(&w, cfg.kind)?;
    let mut sums = Sums::default();
    for _ in 0..trials {
        let x = gaussian(&mut r, 0.0, 1.0, n)?;
        let c_prev = gaussian(&mut r, 0.0, predicted, n)?;
        let st = step_at(&w, peep, &x, &x, &c_prev, act, 0)?;
        sums.add(&st.h, &st.c);
    }
    Ok(pooled_var(sums.h, sums.h2, (trials * n) as f64))
}

/// Iterates the linearized cell for `steps` steps per trial. Weights are
/// drawn once per trial; each step feeds a fresh `x` as both input and
/// previous hidden output, while the cell state carries over.
pub fn probe_stationarity(
    cfg: &VarianceConfig,
    n: usize,
    steps: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<ProbeReport> {
    if steps < 2 {
        return Err(Error::invalid(format!(
            "a stationarity probe needs at least 2 steps, got {steps}"
        )));
    }
    let s = setup(cfg, n, trials, true)?;
    let master = rng.next_u64();
    let act = s.act;
    let predicted = s.predicted;

    // Per trial: sums for each completed step, stopping at the first
    // non-finite value.
    let per_trial: Vec<Vec<Sums>> = (0..trials as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<Sums>> {
            let mut r = Rng::substream(master, k);
            let w = sample_unchecked(cfg, n, n, &mut r, WeightDistribution::Gaussian)?;
            let peep = peepholes_for(&w, cfg.kind)?;
            let mut c: Vector = gaussian(&mut r, 0.0, predicted, n)?;
            let mut out = Vec::with_capacity(steps);
            for t in 0..steps {
                let x = gaussian(&mut r, 0.0, 1.0, n)?;
                match step_at(&w, peep, &x, &x, &c, act, t) {
                    Ok(st) => {
                        let mut sums = Sums::default();
                        sums.add(&st.h, &st.c);
                        if !(sums.h2.is_finite() && sums.c2.is_finite()) {
                            break;
                        }
                        out.push(sums);
                        c = st.c;
                    }
                    Err(Error::NumericOverflow { .. }) => break,
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let completed = per_trial.iter().map(Vec::len).min().unwrap_or(0);
    let diverged_at_step = (completed < steps).then_some(completed + 1);
    if completed == 0 {
        return Err(Error::NumericOverflow {
            gate: "cell state",
            timestep: 0,
        });
    }
    let count = (trials * n) as f64;
    let mut var_c_trajectory = Vec::with_capacity(completed);
    let mut var_h_trajectory = Vec::with_capacity(completed);
    for t in 0..completed {
        let tot = per_trial
            .iter()
            .fold(Sums::default(), |a, tr| a.merge(&tr[t]));
        var_c_trajectory.push(pooled_var(tot.c, tot.c2, count));
        var_h_trajectory.push(pooled_var(tot.h, tot.h2, count));
    }
    let max_drift = var_c_trajectory
        .iter()
        .map(|v| (v - predicted).abs() / predicted)
        .fold(0.0, f64::max);
    let last: Vec<Sums> = per_trial.iter().map(|tr| tr[completed - 1]).collect();
    let pooled_mean = last.iter().map(|s| s.h).sum::<f64>() / count;
    let est_var_h = *var_h_trajectory.last().expect("completed >= 1");
    let est_var_c = *var_c_trajectory.last().expect("completed >= 1");

    Ok(ProbeReport {
        mode: ProbeMode::Stationarity,
        n,
        trials,
        linearized: true,
        condition_satisfied: s.condition,
        est_var_h,
        est_var_c,
        predicted_var_c: predicted,
        rel_err_h: (est_var_h - 1.0).abs(),
        rel_err_c: (est_var_c - predicted).abs() / predicted,
        se_var_h: trial_se(&last, n, pooled_mean),
        fixed_weight_var_h: None,
        var_c_trajectory,
        var_h_trajectory,
        max_drift_c: Some(max_drift),
        diverged_at_step,
        drift_flagged: max_drift > 1.0 || diverged_at_step.is_some(),
    })
}

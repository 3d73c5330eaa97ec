//! Loss, backpropagation through time, finite-difference checking and the
//! momentum gradient-descent trainer.
//!
//! The network is a single LSTM layer whose hidden output is the prediction:
//! `h¹..h^{T−1}` estimate `x²..x^T`, so the hidden width equals the number
//! of features. The loss is the mean squared error over every timestep,
//! sequence and feature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{peepholes_for, step_at, ActivationSpec, CellKind, LstmWeights, StepState};
use crate::data::{fit_stats, next_step_pairs, SeriesBatch};
use crate::error::{Error, Result};
use crate::math::{gaussian, Rng, Vector};

/// Mean squared error over all timesteps and dimensions.
pub fn loss_l2(pred: &[Vector], target: &[Vector]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("loss of an empty sequence"));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (p, y) in pred.iter().zip(target) {
        if p.len() != y.len() {
            return Err(Error::invalid(format!(
                "prediction of length {} against target of length {}",
                p.len(),
                y.len()
            )));
        }
        sse += p
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        count += p.len();
    }
    Ok(sse / count as f64)
}

/// Forward cache, gradients and loss of one backward pass. `grads` has
/// exactly the layout of the weights it differentiates.
#[derive(Debug, Clone)]
pub struct BpttWorkspace {
    pub states: Vec<StepState>,
    pub grads: LstmWeights,
    pub loss: f64,
}

/// Exact gradient of [`loss_l2`] between the hidden outputs over `xs` and
/// `targets`.
pub fn backward(
    w: &LstmWeights,
    xs: &[Vector],
    targets: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
) -> Result<BpttWorkspace> {
    check_problem(w, xs, targets)?;
    let count = targets.len() * w.hidden_dim();
    let mut grads = zeros_like(w);
    let (sse, states) = accumulate(w, xs, targets, act, kind, 1.0 / count as f64, &mut grads)?;
    Ok(BpttWorkspace {
        states,
        grads,
        loss: sse / count as f64,
    })
}

fn check_problem(w: &LstmWeights, xs: &[Vector], targets: &[Vector]) -> Result<()> {
    w.check_shapes()?;
    if xs.is_empty() {
        return Err(Error::invalid("empty input sequence"));
    }
    if xs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs for {} targets",
            xs.len(),
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().position(|y| y.len() != w.hidden_dim()) {
        return Err(Error::invalid(format!(
            "target {t} has length {}, hidden width is {}",
            targets[t].len(),
            w.hidden_dim()
        )));
    }
    if let Some(t) = xs.iter().position(|x| x.len() != w.input_dim()) {
        return Err(Error::invalid(format!("input {t} has the wrong length")));
    }
    Ok(())
}

fn zeros_like(w: &LstmWeights) -> LstmWeights {
    LstmWeights::zeros(w.hidden_dim(), w.input_dim(), w.kind())
}

fn forward(
    w: &LstmWeights,
    xs: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
) -> Result<Vec<StepState>> {
    let peep = peepholes_for(w, kind)?;
    let zero = Vector::zeros(w.hidden_dim());
    let mut states: Vec<StepState> = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let (h_prev, c_prev) = match states.last() {
            Some(s) => (&s.h[..], &s.c[..]),
            None => (&zero[..], &zero[..]),
        };
        states.push(step_at(w, peep, x, h_prev, c_prev, act, t)?);
    }
    Ok(states)
}

/// Adds `scale · ∂SSE/∂w` into `grads` and returns the sum of squared errors.
fn accumulate(
    w: &LstmWeights,
    xs: &[Vector],
    targets: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
    scale: f64,
    grads: &mut LstmWeights,
) -> Result<(f64, Vec<StepState>)> {
    let states = forward(w, xs, act, kind)?;
    let peep = peepholes_for(w, kind)?;
    let m = w.hidden_dim();
    let zero = Vector::zeros(m);
    let mut sse = 0.0;

    let mut dh_next = vec![0.0; m];
    let mut dc_next = vec![0.0; m];
    let (mut da_f, mut da_i, mut da_z, mut da_o) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);

    for t in (0..states.len()).rev() {
        let s = &states[t];
        let (h_prev, c_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (&states[t - 1].h[..], &states[t - 1].c[..])
        };
        let mut dc_carry = vec![0.0; m];
        for k in 0..m {
            let err = s.h[k] - targets[t][k];
            sse += err * err;
            let dh = 2.0 * scale * err + dh_next[k];
            let sq = act.output.apply(s.c[k]);
            da_o[k] = dh * sq * act.gate.derivative_from_output(s.o[k]);
            let mut dc = dh * s.o[k] * act.output.derivative_from_output(sq) + dc_next[k];
            if let Some(p) = peep {
                dc += da_o[k] * p.vo[k];
            }
            da_f[k] = dc * c_prev[k] * act.gate.derivative_from_output(s.f[k]);
            da_i[k] = dc * s.z[k] * act.gate.derivative_from_output(s.i[k]);
            da_z[k] = dc * s.i[k] * act.modulation.derivative_from_output(s.z[k]);
            dc_carry[k] = dc * s.f[k];
            if let Some(p) = peep {
                dc_carry[k] += da_f[k] * p.vf[k] + da_i[k] * p.vi[k];
            }
        }

        let x = &xs[t];
        grads.wf.add_outer(&da_f, x);
        grads.wi.add_outer(&da_i, x);
        grads.wc.add_outer(&da_z, x);
        grads.wo.add_outer(&da_o, x);
        grads.uf.add_outer(&da_f, h_prev);
        grads.ui.add_outer(&da_i, h_prev);
        grads.uc.add_outer(&da_z, h_prev);
        grads.uo.add_outer(&da_o, h_prev);
        for k in 0..m {
            grads.bf[k] += da_f[k];
            grads.bi[k] += da_i[k];
            grads.bc[k] += da_z[k];
            grads.bo[k] += da_o[k];
        }
        if let (Some(_), Some(gp)) = (peep, grads.peephole.as_mut()) {
            for k in 0..m {
                gp.vf[k] += da_f[k] * c_prev[k];
                gp.vi[k] += da_i[k] * c_prev[k];
                gp.vo[k] += da_o[k] * s.c[k];
            }
        }

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        w.uf.matvec_t_acc(&da_f, &mut dh_next);
        w.ui.matvec_t_acc(&da_i, &mut dh_next);
        w.uc.matvec_t_acc(&da_z, &mut dh_next);
        w.uo.matvec_t_acc(&da_o, &mut dh_next);
        dc_next = dc_carry;
    }
    if !sse.is_finite() {
        return Err(Error::NumericOverflow {
            gate: "loss",
            timestep: states.len().saturating_sub(1),
        });
    }
    Ok((sse, states))
}

fn predictions(
    w: &LstmWeights,
    xs: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
) -> Result<Vec<Vector>> {
    Ok(forward(w, xs, act, kind)?
        .into_iter()
        .map(|s| s.h)
        .collect())
}

/// `L(up) − L(down)` as `Σ (u − d)(u + d − 2y) / count`, which avoids
/// cancelling two nearly equal losses.
fn loss_difference(up: &[Vector], down: &[Vector], targets: &[Vector]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for ((u, d), y) in up.iter().zip(down).zip(targets) {
        for k in 0..y.len() {
            acc += (u[k] - d[k]) * (u[k] + d[k] - 2.0 * y[k]);
        }
        count += y.len();
    }
    acc / count as f64
}

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub param: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic gradient entry with `(L(w+ε) − L(w−ε)) / 2ε`.
///
/// The error of a named parameter is `‖a − n‖ / max(‖a‖, ‖n‖)` over its
/// entries, or the absolute `‖a − n‖` when both norms are below 1e-10. The
/// reported index is the entry with the largest absolute disagreement.
pub fn gradcheck(
    w: &LstmWeights,
    xs: &[Vector],
    targets: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
    eps: f64,
) -> Result<GradCheck> {
    gradcheck_with_fault(w, xs, targets, act, kind, eps, |_| {})
}

/// As [`gradcheck`], with `fault` applied to the analytic gradient first.
/// Used to confirm the check actually detects a broken gradient.
pub fn gradcheck_with_fault(
    w: &LstmWeights,
    xs: &[Vector],
    targets: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
    eps: f64,
    fault: impl FnOnce(&mut LstmWeights),
) -> Result<GradCheck> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let mut ws = backward(w, xs, targets, act, kind)?;
    fault(&mut ws.grads);
    let analytic: Vec<(&'static str, Vec<f64>)> = ws
        .grads
        .params()
        .into_iter()
        .map(|p| (p.name, p.values.to_vec()))
        .collect();

    let mut probe = w.clone();
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        param: analytic.first().map_or("wf", |a| a.0),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (p_idx, (name, a_vals)) in analytic.iter().enumerate() {
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        let (mut entry, mut entry_diff, mut entry_vals) = (0, -1.0, (0.0, 0.0));
        for (j, &a) in a_vals.iter().enumerate() {
            let orig = probe.params()[p_idx].values[j];
            probe.params_mut()[p_idx].values[j] = orig + eps;
            let up = predictions(&probe, xs, act, kind)?;
            probe.params_mut()[p_idx].values[j] = orig - eps;
            let down = predictions(&probe, xs, act, kind)?;
            probe.params_mut()[p_idx].values[j] = orig;
            let numeric = loss_difference(&up, &down, targets) / (2.0 * eps);
            let d = (a - numeric).abs();
            diff2 += d * d;
            a2 += a * a;
            n2 += numeric * numeric;
            if d > entry_diff || d.is_nan() {
                (entry, entry_diff, entry_vals) = (j, d, (a, numeric));
            }
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let err = if scale < 1e-10 {
            diff2.sqrt()
        } else {
            diff2.sqrt() / scale
        };
        if err > worst.max_rel_err || err.is_nan() {
            worst = GradCheck {
                max_rel_err: err,
                param: name,
                index: entry,
                analytic: entry_vals.0,
                numeric: entry_vals.1,
            };
        }
    }
    Ok(worst)
}

/// A random problem for gradient checking: weights ~ N(0, 0.5/m), inputs and
/// targets ~ N(0, 1), `m` hidden units and inputs, `t` steps.
pub fn random_problem(
    seed: u64,
    kind: CellKind,
    m: usize,
    t: usize,
) -> Result<(LstmWeights, Vec<Vector>, Vec<Vector>)> {
    if m == 0 || t == 0 {
        return Err(Error::invalid("random problem needs m >= 1 and t >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut w = LstmWeights::zeros(m, m, kind);
    for p in w.params_mut() {
        let vals = gaussian(&mut rng, 0.0, 0.5 / m as f64, p.values.len())?;
        p.values.copy_from_slice(&vals);
    }
    let mut draw = |count| -> Result<Vec<Vector>> {
        (0..count)
            .map(|_| gaussian(&mut rng, 0.0, 1.0, m))
            .collect()
    };
    let xs = draw(t)?;
    let ys = draw(t)?;
    Ok((w, xs, ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Fraction of the training sequences forming the (fixed) batch.
    pub batch_fraction: f64,
    pub seed: u64,
    pub freeze_biases: bool,
    /// Training loss above which a run is declared divergent.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 100,
            batch_fraction: 0.85,
            seed: 0,
            freeze_biases: false,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::invalid("batch_fraction must be in (0, 1]"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::invalid("divergence_threshold must be > 0"));
        }
        Ok(())
    }
}

/// Heavy-ball optimizer state: one velocity entry per parameter.
#[derive(Debug, Clone)]
pub struct Momentum {
    velocity: LstmWeights,
}

impl Momentum {
    pub fn new(w: &LstmWeights) -> Self {
        Momentum {
            velocity: zeros_like(w),
        }
    }

    /// `v ← μv − η(g + λw)`, `w ← w + v`. Biases get no decay, and are left
    /// alone entirely when frozen.
    pub fn step(&mut self, w: &mut LstmWeights, grads: &LstmWeights, tc: &TrainConfig) {
        let (eta, mu, lambda) = (tc.learning_rate, tc.momentum, tc.weight_decay);
        let grads = grads.params();
        for ((p, v), g) in w
            .params_mut()
            .into_iter()
            .zip(self.velocity.params_mut())
            .zip(grads)
        {
            let bias = p.is_bias();
            if bias && tc.freeze_biases {
                continue;
            }
            let decay = if bias { 0.0 } else { lambda };
            for ((wk, vk), gk) in p.values.iter_mut().zip(v.values.iter_mut()).zip(g.values) {
                *vk = mu * *vk - eta * (gk + decay * *wk);
                *wk += *vk;
            }
        }
    }
}

/// Gradient of the mean squared error over every next-step target of the
/// selected sequences.
pub fn batch_gradient(
    w: &LstmWeights,
    batch: &SeriesBatch,
    members: &[usize],
    act: ActivationSpec,
    kind: CellKind,
) -> Result<(f64, LstmWeights)> {
    let count: usize = members
        .iter()
        .map(|&k| batch.sequences[k].len().saturating_sub(1) * batch.n_features)
        .sum();
    if count == 0 {
        return Err(Error::invalid("batch holds no next-step targets"));
    }
    let mut grads = zeros_like(w);
    let mut sse = 0.0;
    for &k in members {
        let (xs, ys) = next_step_pairs(&batch.sequences[k]);
        if xs.is_empty() {
            continue;
        }
        check_problem(w, xs, ys)?;
        sse += accumulate(w, xs, ys, act, kind, 1.0 / count as f64, &mut grads)?.0;
    }
    Ok((sse / count as f64, grads))
}

/// Next-step mean squared error of the network over a batch.
pub fn evaluate_mse(
    w: &LstmWeights,
    data: &SeriesBatch,
    act: ActivationSpec,
    kind: CellKind,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty batch"));
    }
    if data.n_features != w.hidden_dim() {
        return Err(Error::invalid(format!(
            "batch has {} features, network predicts {}",
            data.n_features,
            w.hidden_dim()
        )));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for seq in &data.sequences {
        let (xs, ys) = next_step_pairs(seq);
        if xs.is_empty() {
            continue;
        }
        check_problem(w, xs, ys)?;
        let states = forward(w, xs, act, kind)?;
        for (s, y) in states.iter().zip(ys) {
            sse +=
                s.h.iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
        }
        count += ys.len() * data.n_features;
    }
    if count == 0 {
        return Err(Error::invalid("batch holds no next-step targets"));
    }
    Ok(sse / count as f64)
}

/// Why and when a run was stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub reason: String,
}

/// Per-epoch losses of one training run, measured after each update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initializer: String,
    pub dataset: String,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    /// `None` when the validation set is empty.
    pub val_loss: Vec<Option<f64>>,
    pub final_test_mse: Option<f64>,
    pub diverged: Option<Divergence>,
}

impl TrainTrace {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.train_loss.last().copied()
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied().flatten()
    }

    /// `epoch,train_loss,val_loss` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut wr = csv::Writer::from_path(path).map_err(io)?;
        wr.write_record(["epoch", "train_loss", "val_loss"])
            .map_err(io)?;
        for (k, (tl, vl)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            let vl = vl.map(|v| format!("{v:?}")).unwrap_or_default();
            wr.write_record([(k + 1).to_string(), format!("{tl:?}"), vl])
                .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::io(path, e))
    }

    /// Provenance and final numbers as pretty JSON.
    pub fn sidecar_json(&self) -> String {
        let doc = serde_json::json!({
            "initializer": self.initializer,
            "dataset": self.dataset,
            "seed": self.seed,
            "epochs_completed": self.train_loss.len(),
            "final_train_loss": self.final_train_loss(),
            "final_val_loss": self.final_val_loss(),
            "final_test_mse": self.final_test_mse,
            "diverged": self.diverged,
        });
        serde_json::to_string_pretty(&doc).expect("trace sidecar serializes") + "\n"
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.sidecar_json()).map_err(|e| Error::io(path, e))
    }
}

/// Fixed batch membership: a seeded `batch_fraction` of the sequence indices,
/// in ascending order.
pub fn batch_members(n: usize, batch_fraction: f64, seed: u64) -> Vec<usize> {
    let size = ((batch_fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    let mut chosen = idx[..size].to_vec();
    chosen.sort_unstable();
    chosen
}

fn check_standardized(data: &SeriesBatch) -> Result<()> {
    let stats = fit_stats(data)?;
    for (k, s) in stats.iter().enumerate() {
        if s.mean.abs() > 0.1 || (s.std * s.std - 1.0).abs() > 0.1 {
            return Err(Error::invalid(format!(
                "training data is not standardized: feature {k} has mean {:.3} and variance {:.3}",
                s.mean,
                s.std * s.std
            )));
        }
    }
    Ok(())
}

/// Momentum batch gradient descent with L2 weight decay. A divergent run
/// (loss above the threshold, non-finite values) stops early; the returned
/// weights are the last finite ones and the trace records where it stopped.
pub fn train(
    w0: &LstmWeights,
    train_data: &SeriesBatch,
    val_data: &SeriesBatch,
    tc: &TrainConfig,
    act: ActivationSpec,
    kind: CellKind,
) -> Result<(LstmWeights, TrainTrace)> {
    tc.check()?;
    w0.check_shapes()?;
    peepholes_for(w0, kind)?;
    if train_data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if train_data.n_features != w0.hidden_dim() || train_data.n_features != w0.input_dim() {
        return Err(Error::invalid(format!(
            "network is {}x{} but the data has {} features",
            w0.hidden_dim(),
            w0.input_dim(),
            train_data.n_features
        )));
    }
    check_standardized(train_data)?;

    let members = batch_members(train_data.len(), tc.batch_fraction, tc.seed);
    let mut w = w0.clone();
    let mut opt = Momentum::new(&w);
    let mut trace = TrainTrace {
        initializer: String::new(),
        dataset: train_data.name.clone(),
        seed: tc.seed,
        train_loss: Vec::with_capacity(tc.epochs),
        val_loss: Vec::with_capacity(tc.epochs),
        final_test_mse: None,
        diverged: None,
    };
    let diverge = |epoch: usize, reason: String| Divergence { epoch, reason };

    // The gradient pass also yields the loss, so the gradient computed at
    // the updated weights doubles as that epoch's training loss.
    let mut grads = match batch_gradient(&w, train_data, &members, act, kind) {
        Ok((_, g)) => g,
        Err(e @ Error::NumericOverflow { .. }) => {
            trace.diverged = Some(diverge(1, e.to_string()));
            return Ok((w, trace));
        }
        Err(e) => return Err(e),
    };
    for epoch in 1..=tc.epochs {
        let mut next = w.clone();
        opt.step(&mut next, &grads, tc);
        let (loss, next_grads) = match batch_gradient(&next, train_data, &members, act, kind) {
            Ok(r) => r,
            Err(e @ Error::NumericOverflow { .. }) => {
                trace.diverged = Some(diverge(epoch, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || loss > tc.divergence_threshold {
            trace.diverged = Some(diverge(
                epoch,
                format!(
                    "training loss {loss:e} exceeds {:e}",
                    tc.divergence_threshold
                ),
            ));
            break;
        }
        let val = if val_data.is_empty() {
            None
        } else {
            match evaluate_mse(&next, val_data, act, kind) {
                Ok(v) => Some(v),
                Err(e @ Error::NumericOverflow { .. }) => {
                    trace.diverged = Some(diverge(epoch, format!("validation: {e}")));
                    break;
                }
                Err(e) => return Err(e),
            }
        };
        w = next;
        grads = next_grads;
        trace.train_loss.push(loss);
        trace.val_loss.push(val);
    }
    Ok((w, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::unroll;
    use crate::data::{standardize, synth, SynthKind, SynthSpec};

    const ACTS: [ActivationSpec; 4] = [
        ActivationSpec::IDENTITY,
        ActivationSpec::CLASSIC,
        ActivationSpec::LINEARIZED,
        ActivationSpec::REGRESSION,
    ];

    fn v(x: &[f64]) -> Vector {
        Vector::from(x.to_vec())
    }

    #[test]
    fn loss_examples() {
        let a = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        assert_eq!(loss_l2(&a, &a).unwrap(), 0.0);
        let b: Vec<Vector> = a
            .iter()
            .map(|x| x.iter().map(|y| y - 1.0).collect())
            .collect();
        assert_eq!(loss_l2(&a, &b).unwrap(), 1.0);
        assert_eq!(
            loss_l2(&[v(&[1.0]), v(&[3.0])], &[v(&[0.0]), v(&[1.0])]).unwrap(),
            2.5
        );
        assert!(loss_l2(&a, &a[..1]).is_err());
        assert!(loss_l2(&[v(&[1.0])], &[v(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn backward_loss_matches_forward() {
        let (w, xs, ys) = random_problem(4, CellKind::Peephole, 3, 5).unwrap();
        let ws = backward(&w, &xs, &ys, ActivationSpec::CLASSIC, CellKind::Peephole).unwrap();
        let preds: Vec<Vector> = unroll(&w, &xs, ActivationSpec::CLASSIC, CellKind::Peephole)
            .unwrap()
            .into_iter()
            .map(|s| s.h)
            .collect();
        assert!((ws.loss - loss_l2(&preds, &ys).unwrap()).abs() < 1e-15);
        assert_eq!(ws.states.len(), 5);
        assert_eq!(ws.grads.param_count(), w.param_count());
    }

    #[test]
    fn zero_loss_zero_gradient() {
        let (w, xs, _) = random_problem(8, CellKind::Traditional, 2, 4).unwrap();
        let preds: Vec<Vector> = unroll(&w, &xs, ActivationSpec::CLASSIC, CellKind::Traditional)
            .unwrap()
            .into_iter()
            .map(|s| s.h)
            .collect();
        let ws = backward(
            &w,
            &xs,
            &preds,
            ActivationSpec::CLASSIC,
            CellKind::Traditional,
        )
        .unwrap();
        assert_eq!(ws.loss, 0.0);
        assert_eq!(ws.grads.norm(), 0.0);
        let gc = gradcheck(
            &w,
            &xs,
            &preds,
            ActivationSpec::CLASSIC,
            CellKind::Traditional,
            1e-6,
        )
        .unwrap();
        assert!(gc.max_rel_err < 1e-9, "{gc:?}");
    }

    #[test]
    fn gradcheck_random_instances() {
        let mut worst: f64 = 0.0;
        let mut case = 0u64;
        for kind in [CellKind::Traditional, CellKind::Peephole] {
            for act in ACTS {
                for m in 1..=4 {
                    case += 1;
                    let t = 1 + (case as usize % 5);
                    let (w, xs, ys) = random_problem(100 + case, kind, m, t).unwrap();
                    let gc = gradcheck(&w, &xs, &ys, act, kind, 1e-6).unwrap();
                    assert!(
                        gc.max_rel_err < 1e-5,
                        "{kind:?} {act:?} m={m} t={t}: {gc:?}"
                    );
                    worst = worst.max(gc.max_rel_err);
                }
            }
        }
        assert!(worst > 0.0);
    }

    #[test]
    fn gradcheck_catches_a_fault() {
        let (w, xs, ys) = random_problem(1, CellKind::Peephole, 2, 3).unwrap();
        let gc = gradcheck_with_fault(
            &w,
            &xs,
            &ys,
            ActivationSpec::CLASSIC,
            CellKind::Peephole,
            1e-6,
            |g| {
                g.uo[(0, 1)] = g.uo[(0, 1)] * 1.01 + 1e-3;
            },
        )
        .unwrap();
        assert!(gc.max_rel_err > 1e-3);
        assert_eq!((gc.param, gc.index), ("uo", 1));
        assert!(gradcheck(
            &w,
            &xs,
            &ys,
            ActivationSpec::CLASSIC,
            CellKind::Peephole,
            0.0
        )
        .is_err());
    }

    #[test]
    fn zero_peephole_gradients_match_traditional() {
        let (mut wp, xs, ys) = random_problem(21, CellKind::Peephole, 3, 5).unwrap();
        let p = wp.peephole.as_mut().unwrap();
        for vec in [&mut p.vf, &mut p.vi, &mut p.vo] {
            vec.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut wt = wp.clone();
        wt.peephole = None;
        for act in ACTS {
            let gp = backward(&wp, &xs, &ys, act, CellKind::Peephole).unwrap();
            let gt = backward(&wt, &xs, &ys, act, CellKind::Traditional).unwrap();
            assert_eq!(gp.loss, gt.loss);
            let tp = gp.grads.params();
            let shared: Vec<_> = tp.iter().filter(|p| !p.name.starts_with('v')).collect();
            for (a, b) in shared.iter().zip(gt.grads.params()) {
                assert_eq!(a.name, b.name);
                assert_eq!(a.values, b.values, "{}", a.name);
            }
        }
    }

    fn sine_batch(count: usize, seed: u64) -> SeriesBatch {
        let spec = SynthSpec {
            kind: SynthKind::Sine,
            count,
            seq_len: 20,
            n_features: 1,
            noise_var: 0.01,
            seed,
        };
        standardize(&synth(&spec).unwrap()).unwrap()
    }

    #[test]
    fn momentum_free_step_is_plain_descent() {
        let data = sine_batch(10, 3);
        let (w, _, _) = random_problem(2, CellKind::Peephole, 1, 1).unwrap();
        let tc = TrainConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            epochs: 1,
            batch_fraction: 1.0,
            ..TrainConfig::default()
        };
        let act = ActivationSpec::REGRESSION;
        let empty = SeriesBatch {
            sequences: vec![],
            ..data.clone()
        };
        let (w1, trace) = train(&w, &data, &empty, &tc, act, CellKind::Peephole).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let (_, g) = batch_gradient(&w, &data, &all, act, CellKind::Peephole).unwrap();
        let mut expected = w.clone();
        for (p, gp) in expected.params_mut().into_iter().zip(g.params()) {
            for (x, gx) in p.values.iter_mut().zip(gp.values) {
                *x -= tc.learning_rate * gx;
            }
        }
        assert_eq!(w1, expected);
        assert_eq!(trace.val_loss, vec![None]);

        let tiny = TrainConfig {
            learning_rate: 1e-300,
            ..tc
        };
        let (w2, _) = train(&w, &data, &empty, &tiny, act, CellKind::Peephole).unwrap();
        assert_eq!(w2, w);
    }

    #[test]
    fn decay_alone_contracts_geometrically() {
        let (mut w, _, _) = random_problem(5, CellKind::Traditional, 3, 1).unwrap();
        for b in [&mut w.bf, &mut w.bi, &mut w.bc, &mut w.bo] {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        let tc = TrainConfig {
            momentum: 0.0,
            weight_decay: 0.01,
            ..TrainConfig::default()
        };
        let zero = zeros_like(&w);
        let mut opt = Momentum::new(&w);
        let mut prev = w.norm();
        for _ in 0..20 {
            opt.step(&mut w, &zero, &tc);
            let n = w.norm();
            assert!(n < prev);
            assert!((n / prev - (1.0 - 0.1 * 0.01)).abs() < 1e-12);
            prev = n;
        }
    }

    #[test]
    fn frozen_biases_stay_put() {
        let data = sine_batch(10, 4);
        let (w, _, _) = random_problem(6, CellKind::Traditional, 1, 1).unwrap();
        let tc = TrainConfig {
            epochs: 3,
            freeze_biases: true,
            ..TrainConfig::default()
        };
        let (w1, _) = train(
            &w,
            &data,
            &data,
            &tc,
            ActivationSpec::REGRESSION,
            CellKind::Traditional,
        )
        .unwrap();
        assert_eq!((&w1.bf, &w1.bo), (&w.bf, &w.bo));
        assert_ne!(w1.wf, w.wf);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = sine_batch(30, 7);
        let (w, _, _) = random_problem(9, CellKind::Peephole, 1, 1).unwrap();
        let tc = TrainConfig {
            epochs: 30,
            seed: 11,
            ..TrainConfig::default()
        };
        let act = ActivationSpec::REGRESSION;
        let a = train(&w, &data, &data, &tc, act, CellKind::Peephole).unwrap();
        let b = train(&w, &data, &data, &tc, act, CellKind::Peephole).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.train_loss.len(), 30);
        assert!(a.1.diverged.is_none());
        assert!(a.1.final_train_loss().unwrap() < a.1.train_loss[0]);
    }

    #[test]
    fn divergence_is_flagged_and_monotone() {
        let data = sine_batch(10, 5);
        let (mut w, _, _) = random_problem(3, CellKind::Traditional, 1, 1).unwrap();
        for p in w.params_mut() {
            p.values.iter_mut().for_each(|x| *x *= 40.0);
        }
        let act = ActivationSpec::IDENTITY;
        let loose = TrainConfig {
            epochs: 20,
            learning_rate: 5.0,
            ..TrainConfig::default()
        };
        let (_, t1) = train(&w, &data, &data, &loose, act, CellKind::Traditional).unwrap();
        let d1 = t1.diverged.clone().expect("run should diverge");
        assert_eq!(t1.train_loss.len(), d1.epoch - 1);
        let strict = TrainConfig {
            divergence_threshold: 1e3,
            ..loose
        };
        let (_, t2) = train(&w, &data, &data, &strict, act, CellKind::Traditional).unwrap();
        assert!(t2.diverged.unwrap().epoch <= d1.epoch);
    }

    #[test]
    fn rejects_unstandardized_data() {
        let spec = SynthSpec {
            kind: SynthKind::Sine,
            count: 5,
            seq_len: 10,
            n_features: 1,
            noise_var: 0.0,
            seed: 1,
        };
        let mut raw = synth(&spec).unwrap();
        for seq in raw.sequences.iter_mut() {
            for x in seq.iter_mut() {
                x[0] = x[0] * 3.0 + 5.0;
            }
        }
        let w = LstmWeights::zeros(1, 1, CellKind::Traditional);
        let err = train(
            &w,
            &raw,
            &raw,
            &TrainConfig::default(),
            ActivationSpec::REGRESSION,
            CellKind::Traditional,
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_network_predicts_zero() {
        let spec = SynthSpec {
            kind: SynthKind::Ar1,
            count: 200,
            seq_len: 30,
            n_features: 2,
            noise_var: 0.2,
            seed: 8,
        };
        let data = standardize(&synth(&spec).unwrap()).unwrap();
        for kind in [CellKind::Traditional, CellKind::Peephole] {
            let w = LstmWeights::zeros(2, 2, kind);
            let mse = evaluate_mse(&w, &data, ActivationSpec::REGRESSION, kind).unwrap();
            assert!((mse - 1.0).abs() < 0.1, "{mse}");
        }
        let empty = SeriesBatch {
            sequences: vec![],
            ..data
        };
        let w = LstmWeights::zeros(2, 2, CellKind::Traditional);
        assert!(evaluate_mse(
            &w,
            &empty,
            ActivationSpec::REGRESSION,
            CellKind::Traditional
        )
        .is_err());
    }

    #[test]
    fn trace_files() {
        let trace = TrainTrace {
            initializer: "proposed-1".into(),
            dataset: "sine".into(),
            seed: 3,
            train_loss: vec![0.5, 0.25],
            val_loss: vec![Some(0.6), None],
            final_test_mse: Some(0.3),
            diverged: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("t.csv");
        trace.write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss\n1,0.5,0.6\n2,0.25,\n");
        let json: serde_json::Value = serde_json::from_str(&trace.sidecar_json()).unwrap();
        assert_eq!(json["final_train_loss"], 0.25);
        assert_eq!(json["final_test_mse"], 0.3);
        assert_eq!(json["initializer"], "proposed-1");
    }

    #[test]
    fn batch_membership_is_fixed_by_seed() {
        let a = batch_members(100, 0.85, 4);
        assert_eq!(a.len(), 85);
        assert_eq!(a, batch_members(100, 0.85, 4));
        assert_ne!(a, batch_members(100, 0.85, 5));
        assert_eq!(batch_members(3, 0.1, 0).len(), 1);
        assert!(a.windows(2).all(|p| p[0] < p[1]));
    }
}

//! Variance-preserving initialization for LSTMs.
//!
//! A [`VarianceConfig`] fixes the variance of every weight family. Under the
//! usual simplifying assumptions (zero-mean standardized inputs, zero biases,
//! the recurrent input equal to the current input, independence between
//! gates and cell state) the cell output keeps the input variance exactly
//! when the configuration satisfies one of four closed-form conditions:
//!
//! | cell        | gates              | validator                          |
//! |-------------|--------------------|------------------------------------|
//! | traditional | identity / tanh    | [`validate_traditional_identity`]  |
//! | peephole    | identity / tanh    | [`validate_peephole_identity`]     |
//! | traditional | logistic sigmoid   | [`validate_traditional_sigmoid`]   |
//! | peephole    | logistic sigmoid   | [`validate_peephole_sigmoid`]      |
//!
//! The sigmoid conditions come from the first-order expansion
//! `σ(x) ≈ 0.5 + 0.25 x`, which adds 1/2 to the mean and scales variance by
//! 1/16. Each condition has a strict range clause on the forget path and an
//! equality clause; equality is checked to an explicit absolute tolerance.
//!
//! For peephole cells the stationary cell variance solves two quadratics in
//! `Var(c)`. The first comes from the output equations (see
//! [`cell_variance_root1`]), the second from the gate and cell equations (see
//! [`cell_variance_root2`]). The equality clauses equate the positive root of
//! the first with the double root of the second, so the discriminant Δ₂ of
//! the second is reported alongside every peephole check. The catalogued
//! configurations satisfy the equality clause with Δ₂ ≠ 0.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{CellKind, LstmWeights, Peepholes};
use crate::error::{Error, Result};
use crate::math::{gaussian, orthogonalize, uniform_matched, Matrix, Rng};

/// Default absolute tolerance on equality clauses.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Which gate nonlinearity the variance algebra assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// Identity (or tanh, which is identity to first order) gates.
    Identity,
    /// Logistic gates, linearized about zero.
    SigmoidLinearized,
}

/// Variances of every weight family of an LSTM with `n` inputs.
///
/// Serialized as a flat JSON object with exactly these field names; the
/// peephole fields appear iff `kind` is `peephole`. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub var_wf: f64,
    pub var_uf: f64,
    pub var_wi: f64,
    pub var_ui: f64,
    pub var_wc: f64,
    pub var_uc: f64,
    pub var_wo: f64,
    pub var_uo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_vf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_vi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_vo: Option<f64>,
    pub n: usize,
    pub kind: CellKind,
    pub gate_mode: GateMode,
}

/// Variances of the three peephole vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeepholeVariances {
    pub vf: f64,
    pub vi: f64,
    pub vo: f64,
}

impl VarianceConfig {
    /// Config from per-family `(Var(w), Var(u))` pairs in forget, input,
    /// modulation, output order.
    pub fn traditional(n: usize, gate_mode: GateMode, pairs: [(f64, f64); 4]) -> Self {
        let [(var_wf, var_uf), (var_wi, var_ui), (var_wc, var_uc), (var_wo, var_uo)] = pairs;
        VarianceConfig {
            var_wf,
            var_uf,
            var_wi,
            var_ui,
            var_wc,
            var_uc,
            var_wo,
            var_uo,
            var_vf: None,
            var_vi: None,
            var_vo: None,
            n,
            kind: CellKind::Traditional,
            gate_mode,
        }
    }

    pub fn peephole(
        n: usize,
        gate_mode: GateMode,
        pairs: [(f64, f64); 4],
        peep: PeepholeVariances,
    ) -> Self {
        VarianceConfig {
            var_vf: Some(peep.vf),
            var_vi: Some(peep.vi),
            var_vo: Some(peep.vo),
            kind: CellKind::Peephole,
            ..VarianceConfig::traditional(n, gate_mode, pairs)
        }
    }

    /// The variance profile of the normalized baseline: `1/n` everywhere,
    /// peepholes included.
    pub fn normalized_profile(n: usize, kind: CellKind, gate_mode: GateMode) -> Self {
        let v = 1.0 / n as f64;
        match kind {
            CellKind::Traditional => VarianceConfig::traditional(n, gate_mode, [(v, v); 4]),
            CellKind::Peephole => VarianceConfig::peephole(
                n,
                gate_mode,
                [(v, v); 4],
                PeepholeVariances {
                    vf: v,
                    vi: v,
                    vo: v,
                },
            ),
        }
    }

    /// The same profile for input dimension `n`: input and recurrent
    /// variances scale with `1/n`, peephole variances are unchanged.
    pub fn rescaled(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        let r = self.n as f64 / n as f64;
        Ok(VarianceConfig {
            var_wf: self.var_wf * r,
            var_uf: self.var_uf * r,
            var_wi: self.var_wi * r,
            var_ui: self.var_ui * r,
            var_wc: self.var_wc * r,
            var_uc: self.var_uc * r,
            var_wo: self.var_wo * r,
            var_uo: self.var_uo * r,
            n,
            ..self.clone()
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: VarianceConfig = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        VarianceConfig::from_json(&text)
    }

    /// Structural invariants: non-negative finite variances, `n ≥ 1`, and
    /// peephole fields present iff the cell has peepholes.
    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("variance config needs n >= 1"));
        }
        for (name, v) in self.named_variances() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let present = [self.var_vf, self.var_vi, self.var_vo]
            .iter()
            .filter(|v| v.is_some())
            .count();
        match (self.kind, present) {
            (CellKind::Traditional, 0) | (CellKind::Peephole, 3) => Ok(()),
            (CellKind::Traditional, _) => Err(Error::invalid(
                "traditional config must not carry peephole variances",
            )),
            (CellKind::Peephole, _) => Err(Error::invalid(
                "peephole config needs var_vf, var_vi and var_vo",
            )),
        }
    }

    pub fn named_variances(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("var_wf", self.var_wf),
            ("var_uf", self.var_uf),
            ("var_wi", self.var_wi),
            ("var_ui", self.var_ui),
            ("var_wc", self.var_wc),
            ("var_uc", self.var_uc),
            ("var_wo", self.var_wo),
            ("var_uo", self.var_uo),
        ];
        for (name, v) in [
            ("var_vf", self.var_vf),
            ("var_vi", self.var_vi),
            ("var_vo", self.var_vo),
        ] {
            if let Some(v) = v {
                out.push((name, v));
            }
        }
        out
    }

    pub fn peepholes(&self) -> Option<PeepholeVariances> {
        Some(PeepholeVariances {
            vf: self.var_vf?,
            vi: self.var_vi?,
            vo: self.var_vo?,
        })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `N (Var(w_f) + Var(u_f))` and the matching input, modulation and
    /// output terms.
    pub fn scaled_sums(&self) -> ScaledSums {
        let n = self.nf();
        ScaledSums {
            forget: n * (self.var_wf + self.var_uf),
            input: n * (self.var_wi + self.var_ui),
            modulation: n * (self.var_wc + self.var_uc),
            output: n * (self.var_wo + self.var_uo),
        }
    }

    fn require(&self, kind: CellKind, mode: GateMode) -> Result<()> {
        self.check()?;
        if self.kind != kind || self.gate_mode != mode {
            return Err(Error::invalid(format!(
                "validator expects a {kind:?}/{mode:?} config, got {:?}/{:?}",
                self.kind, self.gate_mode
            )));
        }
        Ok(())
    }
}

/// Family variance sums, each multiplied by the input dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledSums {
    pub forget: f64,
    pub input: f64,
    pub modulation: f64,
    pub output: f64,
}

/// Coefficients of `b0 + b1 v + b2 v² = 0` in the cell variance `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub delta: f64,
}

impl QuadCoeffs {
    pub fn new(b0: f64, b1: f64, b2: f64) -> Self {
        QuadCoeffs {
            b0,
            b1,
            b2,
            delta: b1 * b1 - 4.0 * b2 * b0,
        }
    }

    /// Both roots (when real), smaller first.
    pub fn roots(&self) -> Option<(f64, f64)> {
        if self.delta < 0.0 || self.b2 == 0.0 {
            return None;
        }
        let s = self.delta.sqrt();
        let a = (-self.b1 - s) / (2.0 * self.b2);
        let b = (-self.b1 + s) / (2.0 * self.b2);
        Some((a.min(b), a.max(b)))
    }
}

/// Quadratic obtained by requiring `Var(h) = 1` through the output gate.
pub fn quad_output(cfg: &VarianceConfig) -> Result<QuadCoeffs> {
    let peep = peephole_variances(cfg)?;
    let b0 = match cfg.gate_mode {
        GateMode::Identity => -1.0,
        GateMode::SigmoidLinearized => -16.0,
    };
    Ok(QuadCoeffs::new(b0, cfg.scaled_sums().output, peep.vo))
}

/// Quadratic obtained from the gate equations and cell-state stationarity.
pub fn quad_cell(cfg: &VarianceConfig) -> Result<QuadCoeffs> {
    let peep = peephole_variances(cfg)?;
    let s = cfg.scaled_sums();
    let (b0, offset) = match cfg.gate_mode {
        GateMode::Identity => (s.input * s.modulation, 1.0),
        GateMode::SigmoidLinearized => (s.modulation * (s.input + 4.0), 12.0),
    };
    let b1 = peep.vi * s.modulation + s.forget - offset;
    Ok(QuadCoeffs::new(b0, b1, peep.vf))
}

fn peephole_variances(cfg: &VarianceConfig) -> Result<PeepholeVariances> {
    cfg.check()?;
    if cfg.kind != CellKind::Peephole {
        return Err(Error::invalid("cell variance roots need a peephole config"));
    }
    Ok(cfg.peepholes().expect("checked above"))
}

/// Positive root of the output-side quadratic: the stationary `Var(c)` that
/// gives unit output variance.
pub fn cell_variance_root1(cfg: &VarianceConfig) -> Result<f64> {
    let q = quad_output(cfg)?;
    if q.b2 == 0.0 {
        return Err(Error::invalid(
            "var_vo = 0 degenerates the output quadratic",
        ));
    }
    Ok((-q.b1 + q.delta.sqrt()) / (2.0 * q.b2))
}

/// The cell-side root `-b1 / (2 b2)`, i.e. the double root obtained when Δ₂
/// is taken to be zero. Returned together with the actual Δ₂.
pub fn cell_variance_root2(cfg: &VarianceConfig) -> Result<(f64, f64)> {
    let q = quad_cell(cfg)?;
    if q.b2 == 0.0 {
        return Err(Error::invalid("var_vf = 0 degenerates the cell quadratic"));
    }
    if q.b1 >= 0.0 {
        return Err(Error::ConditionViolation {
            reason: format!("cell quadratic needs b1 < 0, got {}", q.b1),
            report: None,
        });
    }
    Ok((-q.b1 / (2.0 * q.b2), q.delta))
}

/// Stationary cell variance predicted for a config. Peephole cells use
/// [`cell_variance_root1`]; traditional cells use the fixed point of the
/// cell recursion.
pub fn stationary_cell_variance(cfg: &VarianceConfig) -> Result<f64> {
    cfg.check()?;
    if cfg.kind == CellKind::Peephole {
        return cell_variance_root1(cfg);
    }
    let s = cfg.scaled_sums();
    let (num, den) = match cfg.gate_mode {
        GateMode::Identity => (s.input * s.modulation, 1.0 - s.forget),
        GateMode::SigmoidLinearized => (
            (s.input / 16.0 + 0.25) * s.modulation,
            0.75 - s.forget / 16.0,
        ),
    };
    if den <= 0.0 {
        return Err(Error::invalid(
            "forget-gate variance too large: cell variance has no fixed point",
        ));
    }
    Ok(num / den)
}

/// Which of the four closed-form conditions a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    TraditionalIdentity,
    PeepholeIdentity,
    TraditionalSigmoid,
    PeepholeSigmoid,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::TraditionalIdentity => "traditional cell, identity gates",
            Condition::PeepholeIdentity => "peephole cell, identity gates",
            Condition::TraditionalSigmoid => "traditional cell, sigmoid gates",
            Condition::PeepholeSigmoid => "peephole cell, sigmoid gates",
        })
    }
}

/// Outcome of checking one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub satisfied: bool,
    /// Strict inequality `0 < range_value < range_upper`.
    pub range_ok: bool,
    pub range_value: f64,
    pub range_upper: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub equality_residual: f64,
    pub tolerance: f64,
    /// Discriminant of the cell-side quadratic (peephole conditions only).
    pub delta2: Option<f64>,
    pub details: Vec<(String, f64)>,
}

impl ConditionReport {
    fn new(
        condition: Condition,
        (range_value, range_upper): (f64, f64),
        (lhs, rhs): (f64, f64),
        tolerance: f64,
        delta2: Option<f64>,
        details: Vec<(String, f64)>,
    ) -> Self {
        let range_ok = range_value > 0.0 && range_value < range_upper;
        let equality_residual = (lhs - rhs).abs();
        ConditionReport {
            condition,
            satisfied: range_ok && equality_residual <= tolerance,
            range_ok,
            range_value,
            range_upper,
            lhs,
            rhs,
            equality_residual,
            tolerance,
            delta2,
            details,
        }
    }

    pub fn equality_ok(&self) -> bool {
        self.equality_residual <= self.tolerance
    }

    pub fn violated_clauses(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.range_ok {
            out.push("range");
        }
        if !self.equality_ok() {
            out.push("equality");
        }
        out
    }

    pub fn summary(&self) -> String {
        if self.satisfied {
            format!(
                "{}: satisfied (residual {:.3e})",
                self.condition, self.equality_residual
            )
        } else {
            format!(
                "{}: violated {} clause(s) (range {} in (0, {}), residual {:.3e} > tol {:.1e})",
                self.condition,
                self.violated_clauses().join(" and "),
                self.range_value,
                self.range_upper,
                self.equality_residual,
                self.tolerance
            )
        }
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "condition        {}", self.condition)?;
        writeln!(
            f,
            "range clause     0 < {:.12} < {:.12}  [{}]",
            self.range_value,
            self.range_upper,
            if self.range_ok { "ok" } else { "VIOLATED" }
        )?;
        writeln!(f, "equality lhs     {:.12}", self.lhs)?;
        writeln!(f, "equality rhs     {:.12}", self.rhs)?;
        writeln!(
            f,
            "residual         {:.3e} (tol {:.1e})  [{}]",
            self.equality_residual,
            self.tolerance,
            if self.equality_ok() { "ok" } else { "VIOLATED" }
        )?;
        if let Some(d) = self.delta2 {
            writeln!(f, "delta2           {d:.6} (diagnostic)")?;
        }
        for (name, v) in &self.details {
            writeln!(f, "{name:<16} {v:.12}")?;
        }
        write!(
            f,
            "verdict          {}",
            if self.satisfied {
                "SATISFIED"
            } else {
                "VIOLATED"
            }
        )
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::invalid(format!(
            "tolerance must be finite and >= 0, got {tol}"
        )));
    }
    Ok(())
}

fn sum_details(s: &ScaledSums) -> Vec<(String, f64)> {
    vec![
        ("N(wf+uf)".into(), s.forget),
        ("N(wi+ui)".into(), s.input),
        ("N(wc+uc)".into(), s.modulation),
        ("N(wo+uo)".into(), s.output),
    ]
}

/// Traditional cell, identity gates:
/// `0 < Var(wf)+Var(uf) < 1/N` and
/// `1 − N(Var(wf)+Var(uf)) = ∏_{k∈{i,c,o}} N(Var(wk)+Var(uk))`.
pub fn validate_traditional_identity(cfg: &VarianceConfig, tol: f64) -> Result<ConditionReport> {
    cfg.require(CellKind::Traditional, GateMode::Identity)?;
    check_tolerance(tol)?;
    let n = cfg.nf();
    let s = cfg.scaled_sums();
    Ok(ConditionReport::new(
        Condition::TraditionalIdentity,
        (cfg.var_wf + cfg.var_uf, 1.0 / n),
        (1.0 - s.forget, s.input * s.modulation * s.output),
        tol,
        None,
        sum_details(&s),
    ))
}

/// Traditional cell, sigmoid gates:
/// `0 < Var(wf)+Var(uf) < 12/N` and
/// `(12 − N(wf+uf)) / (N(wi+ui) + 4) = N²(wo+uo)(wc+uc) / 16`.
pub fn validate_traditional_sigmoid(cfg: &VarianceConfig, tol: f64) -> Result<ConditionReport> {
    cfg.require(CellKind::Traditional, GateMode::SigmoidLinearized)?;
    check_tolerance(tol)?;
    let n = cfg.nf();
    let s = cfg.scaled_sums();
    Ok(ConditionReport::new(
        Condition::TraditionalSigmoid,
        (cfg.var_wf + cfg.var_uf, 12.0 / n),
        (
            (12.0 - s.forget) / (s.input + 4.0),
            s.output * s.modulation / 16.0,
        ),
        tol,
        None,
        sum_details(&s),
    ))
}

/// Peephole cell, identity gates:
/// `0 < Var(vi)(Var(wc)+Var(uc)) + (Var(wf)+Var(uf)) < 1/N` and
/// `(Var(vo)/Var(vf))·√(4N²·Var(vf)(wi+ui)(wc+uc)) = √(N²(wo+uo)² + 4Var(vo)) − N(wo+uo)`.
pub fn validate_peephole_identity(cfg: &VarianceConfig, tol: f64) -> Result<ConditionReport> {
    cfg.require(CellKind::Peephole, GateMode::Identity)?;
    check_tolerance(tol)?;
    validate_peephole(cfg, tol, Condition::PeepholeIdentity)
}

/// Peephole cell, sigmoid gates:
/// `0 < Var(vi)(Var(wc)+Var(uc)) + (Var(wf)+Var(uf)) < 12/N` and
/// `(Var(vo)/Var(vf))·√(4N·Var(vf)(wc+uc)(N(wi+ui)+4)) = √(N²(wo+uo)² + 64Var(vo)) − N(wo+uo)`.
pub fn validate_peephole_sigmoid(cfg: &VarianceConfig, tol: f64) -> Result<ConditionReport> {
    cfg.require(CellKind::Peephole, GateMode::SigmoidLinearized)?;
    check_tolerance(tol)?;
    validate_peephole(cfg, tol, Condition::PeepholeSigmoid)
}

fn validate_peephole(cfg: &VarianceConfig, tol: f64, which: Condition) -> Result<ConditionReport> {
    let p = cfg.peepholes().expect("checked by require");
    if p.vf == 0.0 {
        return Err(Error::DivisionByZero(
            "var_vf = 0: the peephole equality clause is undefined".into(),
        ));
    }
    let n = cfg.nf();
    let s = cfg.scaled_sums();
    let sum_c = cfg.var_wc + cfg.var_uc;
    let (upper, radicand, k) = match which {
        Condition::PeepholeIdentity => (
            1.0 / n,
            4.0 * n * n * p.vf * (cfg.var_wi + cfg.var_ui) * sum_c,
            4.0,
        ),
        _ => (12.0 / n, 4.0 * n * p.vf * sum_c * (s.input + 4.0), 64.0),
    };
    let lhs = p.vo / p.vf * radicand.sqrt();
    let rhs = (s.output * s.output + k * p.vo).sqrt() - s.output;
    let delta2 = quad_cell(cfg)?.delta;
    let mut details = sum_details(&s);
    details.push((
        "Var(c) root1".into(),
        cell_variance_root1(cfg).unwrap_or(f64::NAN),
    ));
    Ok(ConditionReport::new(
        which,
        (p.vi * sum_c + cfg.var_wf + cfg.var_uf, upper),
        (lhs, rhs),
        tol,
        Some(delta2),
        details,
    ))
}

/// Dispatches to the validator matching the config's cell kind and gate mode.
pub fn validate(cfg: &VarianceConfig, tol: f64) -> Result<ConditionReport> {
    match (cfg.kind, cfg.gate_mode) {
        (CellKind::Traditional, GateMode::Identity) => validate_traditional_identity(cfg, tol),
        (CellKind::Traditional, GateMode::SigmoidLinearized) => {
            validate_traditional_sigmoid(cfg, tol)
        }
        (CellKind::Peephole, GateMode::Identity) => validate_peephole_identity(cfg, tol),
        (CellKind::Peephole, GateMode::SigmoidLinearized) => validate_peephole_sigmoid(cfg, tol),
    }
}

/// Solves the peephole equality clause for `Var(vo)` given the other ten
/// variances (the `var_vo` field of `cfg` is ignored).
pub fn solve_output_peephole_variance(cfg: &VarianceConfig) -> Result<f64> {
    let mut probe = cfg.clone();
    probe.var_vo = Some(1.0);
    let p = peephole_variances(&probe)?;
    if p.vf == 0.0 {
        return Err(Error::DivisionByZero("var_vf = 0".into()));
    }
    let n = cfg.nf();
    let s = cfg.scaled_sums();
    let sum_c = cfg.var_wc + cfg.var_uc;
    let (radicand, k) = match cfg.gate_mode {
        GateMode::Identity => (4.0 * n * n * p.vf * (cfg.var_wi + cfg.var_ui) * sum_c, 4.0),
        GateMode::SigmoidLinearized => (4.0 * n * p.vf * sum_c * (s.input + 4.0), 64.0),
    };
    // (vo/vf)·S + B = √(B² + k·vo)  ⇒  vo = vf (k vf − 2 S B) / S²
    let root = radicand.sqrt();
    let vo = p.vf * (k * p.vf - 2.0 * root * s.output) / (root * root);
    if !(vo > 0.0) || !vo.is_finite() {
        return Err(Error::invalid(format!(
            "no positive Var(vo) satisfies the equality for these variances (got {vo})"
        )));
    }
    Ok(vo)
}

/// One of the four catalogued peephole/sigmoid configurations, `index` 1..=4.
pub fn catalogue_config(index: usize, n: usize) -> Result<VarianceConfig> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let nn = n as f64;
    let per_n = |k: f64| k / nn;
    let (peep, pairs) = match index {
        1 => (
            1.0,
            [
                (per_n(1.0), per_n(1.0)),
                (per_n(2.0), per_n(2.0)),
                (per_n(0.25), per_n(0.25)),
                (per_n(3.0), per_n(3.0)),
            ],
        ),
        2 => (
            0.5,
            [
                (per_n(1.0), per_n(1.0)),
                (per_n(2.0), per_n(2.0)),
                (per_n(0.5), per_n(0.5)),
                (per_n(1.0), per_n(1.0)),
            ],
        ),
        3 => (
            1.0,
            [
                (per_n(0.75), per_n(0.25)),
                (per_n(3.0), per_n(1.0)),
                (per_n(0.25), per_n(0.25)),
                (per_n(4.0), per_n(2.0)),
            ],
        ),
        4 => (
            1.0,
            [
                (per_n(0.25), per_n(0.75)),
                (per_n(1.0), per_n(3.0)),
                (per_n(0.25), per_n(0.25)),
                (per_n(2.0), per_n(4.0)),
            ],
        ),
        _ => {
            return Err(Error::invalid(format!(
                "catalogue index must be 1..=4, got {index}"
            )))
        }
    };
    Ok(VarianceConfig::peephole(
        n,
        GateMode::SigmoidLinearized,
        pairs,
        PeepholeVariances {
            vf: peep,
            vi: peep,
            vo: peep,
        },
    ))
}

/// Law used to draw weights of a prescribed variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDistribution {
    #[default]
    Gaussian,
    /// Zero-centred uniform with the same variance.
    Uniform,
}

fn draw(rng: &mut Rng, dist: WeightDistribution, variance: f64, n: usize) -> Result<Vec<f64>> {
    Ok(match dist {
        WeightDistribution::Gaussian => gaussian(rng, 0.0, variance, n)?,
        WeightDistribution::Uniform => uniform_matched(rng, variance, n)?,
    }
    .into_inner())
}

fn check_square(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and n must be >= 1"));
    }
    if m != n {
        return Err(Error::invalid(format!(
            "the initialization conditions assume m == n (got m = {m}, n = {n})"
        )));
    }
    Ok(())
}

/// Draws weights for `cfg` after checking it with its validator at
/// [`DEFAULT_TOLERANCE`]. Biases are zero.
pub fn sample_weights(
    cfg: &VarianceConfig,
    m: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<LstmWeights> {
    sample_weights_with(
        cfg,
        m,
        n,
        rng,
        WeightDistribution::Gaussian,
        DEFAULT_TOLERANCE,
    )
}

pub fn sample_weights_with(
    cfg: &VarianceConfig,
    m: usize,
    n: usize,
    rng: &mut Rng,
    dist: WeightDistribution,
    tol: f64,
) -> Result<LstmWeights> {
    check_square(m, n)?;
    if cfg.n != n {
        return Err(Error::invalid(format!(
            "config is for n = {}, asked for n = {n}",
            cfg.n
        )));
    }
    let report = validate(cfg, tol)?;
    if !report.satisfied {
        return Err(Error::ConditionViolation {
            reason: report.summary(),
            report: Some(Box::new(report)),
        });
    }
    sample_unchecked(cfg, m, n, rng, dist)
}

/// Draws weights for `cfg` without checking the initialization condition.
/// Structural checks still apply.
pub fn sample_unchecked(
    cfg: &VarianceConfig,
    m: usize,
    n: usize,
    rng: &mut Rng,
    dist: WeightDistribution,
) -> Result<LstmWeights> {
    cfg.check()?;
    check_square(m, n)?;
    let mut w = LstmWeights::zeros(m, n, cfg.kind);
    let variances = cfg.named_variances();
    for p in w.params_mut() {
        if p.is_bias() {
            continue;
        }
        let key = format!("var_{}", p.name);
        let var = variances
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("every weight family has a variance");
        let vals = draw(rng, dist, var, p.values.len())?;
        p.values.copy_from_slice(&vals);
    }
    Ok(w)
}

/// Every weight (and peephole) entry `~ N(0, 1/n)`, zero biases.
pub fn baseline_normalized(
    m: usize,
    n: usize,
    kind: CellKind,
    rng: &mut Rng,
) -> Result<LstmWeights> {
    check_square(m, n)?;
    let cfg = VarianceConfig::normalized_profile(n, kind, GateMode::SigmoidLinearized);
    sample_unchecked(&cfg, m, n, rng, WeightDistribution::Gaussian)
}

/// As [`baseline_normalized`], but each recurrent matrix is an independent
/// random orthogonal matrix.
pub fn baseline_orthogonal(
    m: usize,
    n: usize,
    kind: CellKind,
    rng: &mut Rng,
) -> Result<LstmWeights> {
    check_square(m, n)?;
    let var = 1.0 / n as f64;
    let mut w = LstmWeights::zeros(m, n, kind);
    for wm in [&mut w.wf, &mut w.wi, &mut w.wc, &mut w.wo] {
        *wm = Matrix::from_vec(m, n, gaussian(rng, 0.0, var, m * n)?.into_inner())?;
    }
    for um in [&mut w.uf, &mut w.ui, &mut w.uc, &mut w.uo] {
        *um = orthogonalize(rng, m)?;
    }
    if kind == CellKind::Peephole {
        w.peephole = Some(Peepholes {
            vf: gaussian(rng, 0.0, var, m)?,
            vi: gaussian(rng, 0.0, var, m)?,
            vo: gaussian(rng, 0.0, var, m)?,
        });
    }
    debug_assert!(w.bf.iter().all(|&b| b == 0.0));
    Ok(w)
}

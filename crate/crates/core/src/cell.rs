//! Forward dynamics of traditional and peephole LSTM cells.
//!
//! ```text
//! f = σg(Wf x + Uf h' [+ vf ⊙ c'] + bf)
//! i = σg(Wi x + Ui h' [+ vi ⊙ c'] + bi)
//! z = σc(Wc x + Uc h' + bc)
//! c = f ⊙ c' + i ⊙ z
//! o = σg(Wo x + Uo h' [+ vo ⊙ c] + bo)
//! h = o ⊙ σh(c)
//! ```
//!
//! `h'`, `c'` are the previous hidden output and cell state. The bracketed
//! peephole terms exist only for [`CellKind::Peephole`]; note that the output
//! gate reads the *updated* cell state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};

/// Nonlinearity applied to the three gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateActivation {
    Logistic,
    /// First-order Taylor expansion of the logistic about zero: `0.5 + 0.25 x`.
    LinearizedSigmoid,
    Identity,
}

/// Nonlinearity for the input modulation and for the cell output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Squash {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub gate: GateActivation,
    pub modulation: Squash,
    pub output: Squash,
}

impl ActivationSpec {
    /// Logistic gates, tanh modulation, identity cell output. This is the
    /// configuration the benchmark networks use.
    pub const REGRESSION: ActivationSpec = ActivationSpec {
        gate: GateActivation::Logistic,
        modulation: Squash::Tanh,
        output: Squash::Identity,
    };

    /// Logistic gates with tanh on both modulation and output.
    pub const CLASSIC: ActivationSpec = ActivationSpec {
        gate: GateActivation::Logistic,
        modulation: Squash::Tanh,
        output: Squash::Tanh,
    };

    /// The regime in which the variance algebra is exact for logistic gates.
    pub const LINEARIZED: ActivationSpec = ActivationSpec {
        gate: GateActivation::LinearizedSigmoid,
        modulation: Squash::Identity,
        output: Squash::Identity,
    };

    pub const IDENTITY: ActivationSpec = ActivationSpec {
        gate: GateActivation::Identity,
        modulation: Squash::Identity,
        output: Squash::Identity,
    };
}

/// Named [`ActivationSpec`] constants, for configs and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationPreset {
    Regression,
    Classic,
    Linearized,
    Identity,
}

impl ActivationPreset {
    pub const ALL: [ActivationPreset; 4] = [
        ActivationPreset::Regression,
        ActivationPreset::Classic,
        ActivationPreset::Linearized,
        ActivationPreset::Identity,
    ];

    pub fn spec(self) -> ActivationSpec {
        match self {
            ActivationPreset::Regression => ActivationSpec::REGRESSION,
            ActivationPreset::Classic => ActivationSpec::CLASSIC,
            ActivationPreset::Linearized => ActivationSpec::LINEARIZED,
            ActivationPreset::Identity => ActivationSpec::IDENTITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationPreset::Regression => "regression",
            ActivationPreset::Classic => "classic",
            ActivationPreset::Linearized => "linearized",
            ActivationPreset::Identity => "identity",
        }
    }
}

impl std::str::FromStr for ActivationPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ActivationPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown activation `{s}` (expected regression, classic, linearized or identity)"
                ))
            })
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional" => Ok(CellKind::Traditional),
            "peephole" => Ok(CellKind::Peephole),
            other => Err(Error::invalid(format!(
                "unknown cell kind `{other}` (expected traditional or peephole)"
            ))),
        }
    }
}

impl GateActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            GateActivation::Logistic => logistic(x),
            GateActivation::LinearizedSigmoid => 0.5 + 0.25 * x,
            GateActivation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            GateActivation::Logistic => y * (1.0 - y),
            GateActivation::LinearizedSigmoid => 0.25,
            GateActivation::Identity => 1.0,
        }
    }
}

impl Squash {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Squash::Tanh => x.tanh(),
            Squash::Identity => x,
        }
    }

    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Squash::Tanh => 1.0 - y * y,
            Squash::Identity => 1.0,
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Traditional,
    Peephole,
}

/// Diagonal peephole weights, stored as vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peepholes {
    pub vf: Vector,
    pub vi: Vector,
    pub vo: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub wf: Matrix,
    pub wi: Matrix,
    pub wc: Matrix,
    pub wo: Matrix,
    pub uf: Matrix,
    pub ui: Matrix,
    pub uc: Matrix,
    pub uo: Matrix,
    pub peephole: Option<Peepholes>,
    pub bf: Vector,
    pub bi: Vector,
    pub bc: Vector,
    pub bo: Vector,
}

/// A named, flat view of one weight tensor.
pub struct Param<'a> {
    pub name: &'static str,
    pub values: &'a [f64],
}

pub struct ParamMut<'a> {
    pub name: &'static str,
    pub values: &'a mut [f64],
}

impl<'a> Param<'a> {
    pub fn is_bias(&self) -> bool {
        self.name.starts_with('b')
    }
}

impl<'a> ParamMut<'a> {
    pub fn is_bias(&self) -> bool {
        self.name.starts_with('b')
    }
}

impl LstmWeights {
    /// All-zero weights for `m` hidden units and `n` inputs.
    pub fn zeros(m: usize, n: usize, kind: CellKind) -> Self {
        let peephole = match kind {
            CellKind::Traditional => None,
            CellKind::Peephole => Some(Peepholes {
                vf: Vector::zeros(m),
                vi: Vector::zeros(m),
                vo: Vector::zeros(m),
            }),
        };
        LstmWeights {
            wf: Matrix::zeros(m, n),
            wi: Matrix::zeros(m, n),
            wc: Matrix::zeros(m, n),
            wo: Matrix::zeros(m, n),
            uf: Matrix::zeros(m, m),
            ui: Matrix::zeros(m, m),
            uc: Matrix::zeros(m, m),
            uo: Matrix::zeros(m, m),
            peephole,
            bf: Vector::zeros(m),
            bi: Vector::zeros(m),
            bc: Vector::zeros(m),
            bo: Vector::zeros(m),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.wf.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.wf.cols()
    }

    pub fn kind(&self) -> CellKind {
        if self.peephole.is_some() {
            CellKind::Peephole
        } else {
            CellKind::Traditional
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (m, n) = (self.hidden_dim(), self.input_dim());
        let bad = |what: &str| Err(Error::invalid(format!("inconsistent shape for {what}")));
        for (name, w) in [("wi", &self.wi), ("wc", &self.wc), ("wo", &self.wo)] {
            if w.shape() != (m, n) {
                return bad(name);
            }
        }
        for (name, u) in [
            ("uf", &self.uf),
            ("ui", &self.ui),
            ("uc", &self.uc),
            ("uo", &self.uo),
        ] {
            if u.shape() != (m, m) {
                return bad(name);
            }
        }
        for (name, b) in [
            ("bf", &self.bf),
            ("bi", &self.bi),
            ("bc", &self.bc),
            ("bo", &self.bo),
        ] {
            if b.len() != m {
                return bad(name);
            }
        }
        if let Some(p) = &self.peephole {
            for (name, v) in [("vf", &p.vf), ("vi", &p.vi), ("vo", &p.vo)] {
                if v.len() != m {
                    return bad(name);
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<Param<'_>> {
        let mut out = vec![
            Param {
                name: "wf",
                values: self.wf.as_slice(),
            },
            Param {
                name: "wi",
                values: self.wi.as_slice(),
            },
            Param {
                name: "wc",
                values: self.wc.as_slice(),
            },
            Param {
                name: "wo",
                values: self.wo.as_slice(),
            },
            Param {
                name: "uf",
                values: self.uf.as_slice(),
            },
            Param {
                name: "ui",
                values: self.ui.as_slice(),
            },
            Param {
                name: "uc",
                values: self.uc.as_slice(),
            },
            Param {
                name: "uo",
                values: self.uo.as_slice(),
            },
        ];
        if let Some(p) = &self.peephole {
            out.push(Param {
                name: "vf",
                values: &p.vf,
            });
            out.push(Param {
                name: "vi",
                values: &p.vi,
            });
            out.push(Param {
                name: "vo",
                values: &p.vo,
            });
        }
        out.extend([
            Param {
                name: "bf",
                values: &self.bf,
            },
            Param {
                name: "bi",
                values: &self.bi,
            },
            Param {
                name: "bc",
                values: &self.bc,
            },
            Param {
                name: "bo",
                values: &self.bo,
            },
        ]);
        out
    }

    /// Mutable counterpart of [`LstmWeights::params`], in the same order.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = vec![
            ParamMut {
                name: "wf",
                values: self.wf.as_mut_slice(),
            },
            ParamMut {
                name: "wi",
                values: self.wi.as_mut_slice(),
            },
            ParamMut {
                name: "wc",
                values: self.wc.as_mut_slice(),
            },
            ParamMut {
                name: "wo",
                values: self.wo.as_mut_slice(),
            },
            ParamMut {
                name: "uf",
                values: self.uf.as_mut_slice(),
            },
            ParamMut {
                name: "ui",
                values: self.ui.as_mut_slice(),
            },
            ParamMut {
                name: "uc",
                values: self.uc.as_mut_slice(),
            },
            ParamMut {
                name: "uo",
                values: self.uo.as_mut_slice(),
            },
        ];
        if let Some(p) = &mut self.peephole {
            out.push(ParamMut {
                name: "vf",
                values: &mut p.vf,
            });
            out.push(ParamMut {
                name: "vi",
                values: &mut p.vi,
            });
            out.push(ParamMut {
                name: "vo",
                values: &mut p.vo,
            });
        }
        out.extend([
            ParamMut {
                name: "bf",
                values: &mut self.bf,
            },
            ParamMut {
                name: "bi",
                values: &mut self.bi,
            },
            ParamMut {
                name: "bc",
                values: &mut self.bc,
            },
            ParamMut {
                name: "bo",
                values: &mut self.bo,
            },
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }

    /// Euclidean norm over every parameter.
    pub fn norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Everything one cell step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub f: Vector,
    pub i: Vector,
    pub z: Vector,
    pub o: Vector,
    pub c: Vector,
    pub h: Vector,
}

pub fn step_traditional(
    w: &LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    act: ActivationSpec,
) -> Result<StepState> {
    check_step_inputs(w, x, h_prev, c_prev)?;
    step_at(w, None, x, h_prev, c_prev, act, 0)
}

pub fn step_peephole(
    w: &LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    act: ActivationSpec,
) -> Result<StepState> {
    let peep = w
        .peephole
        .as_ref()
        .ok_or_else(|| Error::invalid("peephole step needs peephole weights"))?;
    check_step_inputs(w, x, h_prev, c_prev)?;
    step_at(w, Some(peep), x, h_prev, c_prev, act, 0)
}

/// Runs the cell over `xs` from a zero hidden and cell state. Output `t` is
/// the network's estimate of `xs[t + 1]`.
pub fn unroll(
    w: &LstmWeights,
    xs: &[Vector],
    act: ActivationSpec,
    kind: CellKind,
) -> Result<Vec<StepState>> {
    if xs.is_empty() {
        return Err(Error::invalid("cannot unroll an empty sequence"));
    }
    let peep = peepholes_for(w, kind)?;
    let m = w.hidden_dim();
    let zero = Vector::zeros(m);
    check_step_inputs(w, &xs[0], &zero, &zero)?;
    if let Some(bad) = xs.iter().position(|x| x.len() != w.input_dim()) {
        return Err(Error::invalid(format!("input {bad} has wrong length")));
    }
    let mut states: Vec<StepState> = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let (h_prev, c_prev) = match states.last() {
            Some(s) => (&s.h[..], &s.c[..]),
            None => (&zero[..], &zero[..]),
        };
        let s = step_at(w, peep, x, h_prev, c_prev, act, t)?;
        states.push(s);
    }
    Ok(states)
}

pub(crate) fn peepholes_for(w: &LstmWeights, kind: CellKind) -> Result<Option<&Peepholes>> {
    match kind {
        CellKind::Traditional => Ok(None),
        CellKind::Peephole => w
            .peephole
            .as_ref()
            .map(Some)
            .ok_or_else(|| Error::invalid("peephole cell needs peephole weights")),
    }
}

fn check_step_inputs(w: &LstmWeights, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
    w.check_shapes()?;
    let m = w.hidden_dim();
    if x.len() != w.input_dim() || h_prev.len() != m || c_prev.len() != m {
        return Err(Error::invalid(format!(
            "step expects x of {}, h and c of {m}; got {}, {}, {}",
            w.input_dim(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    Ok(())
}

/// `W x + U h + b`, in that order.
fn affine(wm: &Matrix, um: &Matrix, b: &[f64], x: &[f64], h: &[f64]) -> Vector {
    let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(a, c)| a * c).sum::<f64>();
    (0..wm.rows())
        .map(|r| dot(wm.row(r), x) + dot(um.row(r), h) + b[r])
        .collect()
}

fn finite_or(v: Vector, gate: &'static str, timestep: usize) -> Result<Vector> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericOverflow { gate, timestep })
    }
}

pub(crate) fn step_at(
    w: &LstmWeights,
    peep: Option<&Peepholes>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    act: ActivationSpec,
    t: usize,
) -> Result<StepState> {
    let gate = |mut pre: Vector, v: Option<&Vector>, state: &[f64], name| {
        if let Some(v) = v {
            for ((p, vk), ck) in pre.iter_mut().zip(v.iter()).zip(state) {
                *p += vk * ck;
            }
        }
        for p in pre.iter_mut() {
            *p = act.gate.apply(*p);
        }
        finite_or(pre, name, t)
    };

    let f = gate(
        affine(&w.wf, &w.uf, &w.bf, x, h_prev),
        peep.map(|p| &p.vf),
        c_prev,
        "forget gate",
    )?;
    let i = gate(
        affine(&w.wi, &w.ui, &w.bi, x, h_prev),
        peep.map(|p| &p.vi),
        c_prev,
        "input gate",
    )?;
    let z: Vector = affine(&w.wc, &w.uc, &w.bc, x, h_prev)
        .iter()
        .map(|&a| act.modulation.apply(a))
        .collect();
    let z = finite_or(z, "modulation", t)?;
    let c: Vector = (0..f.len())
        .map(|k| f[k] * c_prev[k] + i[k] * z[k])
        .collect();
    let c = finite_or(c, "cell state", t)?;
    let o = gate(
        affine(&w.wo, &w.uo, &w.bo, x, h_prev),
        peep.map(|p| &p.vo),
        &c,
        "output gate",
    )?;
    let h: Vector = o
        .iter()
        .zip(c.iter())
        .map(|(ok, ck)| ok * act.output.apply(*ck))
        .collect();
    let h = finite_or(h, "hidden output", t)?;
    Ok(StepState { f, i, z, o, c, h })
}

//! Parameter records and forward steps for the five recurrent cells.
//!
//! All cells use the row-vector convention of [`crate::numkit`]: an input
//! weight is `m × p`, a recurrent weight is `p × p`, and a pre-activation is
//! `x W_x + h W_h + b`.

mod gru;
mod lstm;
mod mcrm;
mod nlstm;
mod rnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{Matrix, NumError, Rng, Vector};
use crate::params::Parameters;

pub use gru::gru_step;
pub use lstm::lstm_step;
pub use mcrm::mcrm_step;
pub use nlstm::nlstm_step;
pub use rnn::rnn_step;

pub(crate) use gru::gru_forward;
pub(crate) use lstm::lstm_forward;
pub(crate) use mcrm::mcrm_forward;
pub(crate) use nlstm::nlstm_forward;
pub(crate) use rnn::rnn_forward;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error(transparent)]
    Shape(#[from] NumError),
    #[error("unknown architecture `{0}` (expected one of rnn, gru, lstm, nlstm, mcrm)")]
    UnknownArch(String),
    #[error("{0}")]
    Dimension(String),
}

/// The five recurrent architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Rnn,
    Gru,
    Lstm,
    Nlstm,
    Mcrm,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Rnn, Arch::Gru, Arch::Lstm, Arch::Nlstm, Arch::Mcrm];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Gru => "gru",
            Arch::Lstm => "lstm",
            Arch::Nlstm => "nlstm",
            Arch::Mcrm => "mcrm",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = CellError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CellError::UnknownArch(s.to_string()))
    }
}

/// One LSTM-style affine map `x W_x + h W_h + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vector,
}

impl Affine {
    pub fn zeros(m: usize, p: usize) -> Self {
        Affine {
            w_x: Matrix::zeros(m, p),
            w_h: Matrix::zeros(p, p),
            b: Vector::zeros(p),
        }
    }

    /// `(x W_x + h W_h) + b`.
    pub(crate) fn pre(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let p = self.b.len();
        let mut acc = vec![0.0; p];
        self.w_x.vecmat_acc(x, &mut acc);
        let mut rec = vec![0.0; p];
        self.w_h.vecmat_acc(h, &mut rec);
        for ((a, r), b) in acc.iter_mut().zip(&rec).zip(self.b.iter()) {
            *a = (*a + r) + b;
        }
        acc
    }

    fn slices(&self) -> [&[f64]; 3] {
        [self.w_x.as_slice(), self.w_h.as_slice(), self.b.as_slice()]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.w_x.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.b.as_mut_slice(),
        ]
    }

    fn well_formed(&self, m: usize, p: usize) -> bool {
        self.w_x.is_well_formed()
            && self.w_h.is_well_formed()
            && (self.w_x.rows(), self.w_x.cols()) == (m, p)
            && (self.w_h.rows(), self.w_h.cols()) == (p, p)
            && self.b.len() == p
    }
}

/// One GRU gate with separate input and recurrent biases:
/// `(x W_i + b_i)` and `(h W_h + b_h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruGate {
    pub w_x: Matrix,
    pub b_x: Vector,
    pub w_h: Matrix,
    pub b_h: Vector,
}

impl GruGate {
    pub fn zeros(m: usize, p: usize) -> Self {
        GruGate {
            w_x: Matrix::zeros(m, p),
            b_x: Vector::zeros(p),
            w_h: Matrix::zeros(p, p),
            b_h: Vector::zeros(p),
        }
    }

    /// `x W_x + b_x`.
    pub(crate) fn input_part(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.b_x.len()];
        self.w_x.vecmat_acc(x, &mut acc);
        for (a, b) in acc.iter_mut().zip(self.b_x.iter()) {
            *a += b;
        }
        acc
    }

    /// `h W_h + b_h`.
    pub(crate) fn hidden_part(&self, h: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.b_h.len()];
        self.w_h.vecmat_acc(h, &mut acc);
        for (a, b) in acc.iter_mut().zip(self.b_h.iter()) {
            *a += b;
        }
        acc
    }

    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w_x.as_slice(),
            self.b_x.as_slice(),
            self.w_h.as_slice(),
            self.b_h.as_slice(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_x.as_mut_slice(),
            self.b_x.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.b_h.as_mut_slice(),
        ]
    }

    fn well_formed(&self, m: usize, p: usize) -> bool {
        self.w_x.is_well_formed()
            && self.w_h.is_well_formed()
            && (self.w_x.rows(), self.w_x.cols()) == (m, p)
            && (self.w_h.rows(), self.w_h.cols()) == (p, p)
            && self.b_x.len() == p
            && self.b_h.len() == p
    }
}

/// Elman recurrence `h_t = tanh(x W_xh + h_{t-1} W_hh + b_h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub hidden: Affine,
}

/// LSTM gates. `input` holds W_xi/W_hi/b_i, `forget` W_xf/W_hf/b_f,
/// `candidate` W_xc/W_hc/b_c and `output` W_xo/W_ho/b_o.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input: Affine,
    pub forget: Affine,
    pub candidate: Affine,
    pub output: Affine,
}

/// GRU gates with the dual-bias convention: `reset` (r), `update` (z) and
/// `node` (n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub reset: GruGate,
    pub update: GruGate,
    pub node: GruGate,
}

/// An LSTM whose cell state is the hidden state of an inner GRU. The inner
/// GRU reads the `2p` concatenation of the forget and input interactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McrmParams {
    pub outer: LstmParams,
    pub inner: GruParams,
}

/// Nested LSTM: the outer cell state is the hidden state of an inner LSTM
/// fed the same `2p` concatenation as MCRM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlstmParams {
    pub outer: LstmParams,
    pub inner: LstmParams,
}

impl RnnParams {
    pub fn zeros(m: usize, p: usize) -> Self {
        RnnParams {
            hidden: Affine::zeros(m, p),
        }
    }
}

impl LstmParams {
    pub fn zeros(m: usize, p: usize) -> Self {
        LstmParams {
            input: Affine::zeros(m, p),
            forget: Affine::zeros(m, p),
            candidate: Affine::zeros(m, p),
            output: Affine::zeros(m, p),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.w_x.rows()
    }

    pub fn hidden(&self) -> usize {
        self.input.b.len()
    }

    pub fn gates(&self) -> [&Affine; 4] {
        [&self.input, &self.forget, &self.candidate, &self.output]
    }

    pub fn gates_mut(&mut self) -> [&mut Affine; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.candidate,
            &mut self.output,
        ]
    }

    fn well_formed(&self) -> bool {
        let (m, p) = (self.input_dim(), self.hidden());
        self.gates().iter().all(|g| g.well_formed(m, p))
    }
}

impl GruParams {
    pub fn zeros(m: usize, p: usize) -> Self {
        GruParams {
            reset: GruGate::zeros(m, p),
            update: GruGate::zeros(m, p),
            node: GruGate::zeros(m, p),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.reset.w_x.rows()
    }

    pub fn hidden(&self) -> usize {
        self.reset.b_x.len()
    }

    pub fn gates(&self) -> [&GruGate; 3] {
        [&self.reset, &self.update, &self.node]
    }

    pub fn gates_mut(&mut self) -> [&mut GruGate; 3] {
        [&mut self.reset, &mut self.update, &mut self.node]
    }

    fn well_formed(&self) -> bool {
        let (m, p) = (self.input_dim(), self.hidden());
        self.gates().iter().all(|g| g.well_formed(m, p))
    }
}

impl McrmParams {
    pub fn zeros(m: usize, p: usize) -> Self {
        McrmParams {
            outer: LstmParams::zeros(m, p),
            inner: GruParams::zeros(2 * p, p),
        }
    }
}

impl NlstmParams {
    pub fn zeros(m: usize, p: usize) -> Self {
        NlstmParams {
            outer: LstmParams::zeros(m, p),
            inner: LstmParams::zeros(2 * p, p),
        }
    }
}

macro_rules! impl_parameters {
    ($ty:ty, |$s:ident| [$($field:expr),*]) => {
        impl Parameters for $ty {
            fn tensors(&self) -> Vec<&[f64]> {
                let $s = self;
                let mut out = Vec::new();
                $(out.extend($field.tensors());)*
                out
            }
            fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                let $s = self;
                let mut out = Vec::new();
                $(out.extend($field.tensors_mut());)*
                out
            }
        }
    };
}

impl Parameters for Affine {
    fn tensors(&self) -> Vec<&[f64]> {
        self.slices().to_vec()
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.slices_mut().into_iter().collect()
    }
}

impl Parameters for GruGate {
    fn tensors(&self) -> Vec<&[f64]> {
        self.slices().to_vec()
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.slices_mut().into_iter().collect()
    }
}

impl_parameters!(RnnParams, |s| [s.hidden]);
impl_parameters!(LstmParams, |s| [s.input, s.forget, s.candidate, s.output]);
impl_parameters!(GruParams, |s| [s.reset, s.update, s.node]);
impl_parameters!(McrmParams, |s| [s.outer, s.inner]);
impl_parameters!(NlstmParams, |s| [s.outer, s.inner]);

/// Parameters of any of the five cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum CellParams {
    Rnn(RnnParams),
    Gru(GruParams),
    Lstm(LstmParams),
    Nlstm(NlstmParams),
    Mcrm(McrmParams),
}

impl CellParams {
    pub fn zeros(arch: Arch, m: usize, p: usize) -> Self {
        match arch {
            Arch::Rnn => CellParams::Rnn(RnnParams::zeros(m, p)),
            Arch::Gru => CellParams::Gru(GruParams::zeros(m, p)),
            Arch::Lstm => CellParams::Lstm(LstmParams::zeros(m, p)),
            Arch::Nlstm => CellParams::Nlstm(NlstmParams::zeros(m, p)),
            Arch::Mcrm => CellParams::Mcrm(McrmParams::zeros(m, p)),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            CellParams::Rnn(_) => Arch::Rnn,
            CellParams::Gru(_) => Arch::Gru,
            CellParams::Lstm(_) => Arch::Lstm,
            CellParams::Nlstm(_) => Arch::Nlstm,
            CellParams::Mcrm(_) => Arch::Mcrm,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.hidden.w_x.rows(),
            CellParams::Gru(p) => p.input_dim(),
            CellParams::Lstm(p) => p.input_dim(),
            CellParams::Nlstm(p) => p.outer.input_dim(),
            CellParams::Mcrm(p) => p.outer.input_dim(),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.hidden.b.len(),
            CellParams::Gru(p) => p.hidden(),
            CellParams::Lstm(p) => p.hidden(),
            CellParams::Nlstm(p) => p.outer.hidden(),
            CellParams::Mcrm(p) => p.outer.hidden(),
        }
    }

    /// Checks every tensor against the record's own `(m, p)`, including the
    /// `2p` inner input of the nested cells.
    pub fn is_well_formed(&self) -> bool {
        match self {
            CellParams::Rnn(p) => p.hidden.well_formed(p.hidden.w_x.rows(), p.hidden.b.len()),
            CellParams::Gru(p) => p.well_formed(),
            CellParams::Lstm(p) => p.well_formed(),
            CellParams::Nlstm(p) => {
                let h = p.outer.hidden();
                p.outer.well_formed()
                    && p.inner.well_formed()
                    && p.inner.input_dim() == 2 * h
                    && p.inner.hidden() == h
            }
            CellParams::Mcrm(p) => {
                let h = p.outer.hidden();
                p.outer.well_formed()
                    && p.inner.well_formed()
                    && p.inner.input_dim() == 2 * h
                    && p.inner.hidden() == h
            }
        }
    }

    /// One forward step of whichever cell this is.
    pub fn step(&self, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
        match self {
            CellParams::Rnn(p) => rnn_step(p, x, s),
            CellParams::Gru(p) => gru_step(p, x, s),
            CellParams::Lstm(p) => lstm_step(p, x, s),
            CellParams::Nlstm(p) => nlstm_step(p, x, s),
            CellParams::Mcrm(p) => mcrm_step(p, x, s),
        }
    }

    /// Unchecked step used inside sequence loops after shapes were validated.
    pub(crate) fn step_raw(&self, x: &[f64], s: &CellState) -> StepTrace {
        match self {
            CellParams::Rnn(p) => StepTrace::Rnn(rnn_forward(p, x, &s.h)),
            CellParams::Gru(p) => StepTrace::Gru(gru_forward(p, x, &s.h)),
            CellParams::Lstm(p) => StepTrace::Lstm(lstm_forward(p, x, &s.h, s.c_ref())),
            CellParams::Nlstm(p) => StepTrace::Nlstm(nlstm_forward(
                p,
                x,
                &s.h,
                s.c_ref(),
                s.inner_c.as_deref().unwrap_or(&[]),
            )),
            CellParams::Mcrm(p) => StepTrace::Mcrm(mcrm_forward(p, x, &s.h, s.c_ref())),
        }
    }
}

impl Parameters for CellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            CellParams::Rnn(p) => p.tensors(),
            CellParams::Gru(p) => p.tensors(),
            CellParams::Lstm(p) => p.tensors(),
            CellParams::Nlstm(p) => p.tensors(),
            CellParams::Mcrm(p) => p.tensors(),
        }
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            CellParams::Rnn(p) => p.tensors_mut(),
            CellParams::Gru(p) => p.tensors_mut(),
            CellParams::Lstm(p) => p.tensors_mut(),
            CellParams::Nlstm(p) => p.tensors_mut(),
            CellParams::Mcrm(p) => p.tensors_mut(),
        }
    }
}

/// Recurrent carry between timesteps.
///
/// `c` is present for LSTM, NLSTM and MCRM; `inner_h` for the nested cells,
/// where it always equals `c`; `inner_c` for NLSTM only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub h: Vector,
    pub c: Option<Vector>,
    pub inner_h: Option<Vector>,
    pub inner_c: Option<Vector>,
}

impl CellState {
    pub fn zeros(arch: Arch, p: usize) -> Self {
        let z = || Some(Vector::zeros(p));
        match arch {
            Arch::Rnn | Arch::Gru => CellState {
                h: Vector::zeros(p),
                c: None,
                inner_h: None,
                inner_c: None,
            },
            Arch::Lstm => CellState {
                h: Vector::zeros(p),
                c: z(),
                inner_h: None,
                inner_c: None,
            },
            Arch::Mcrm => CellState {
                h: Vector::zeros(p),
                c: z(),
                inner_h: z(),
                inner_c: None,
            },
            Arch::Nlstm => CellState {
                h: Vector::zeros(p),
                c: z(),
                inner_h: z(),
                inner_c: z(),
            },
        }
    }

    pub(crate) fn c_ref(&self) -> &[f64] {
        self.c.as_deref().unwrap_or(&[])
    }

    /// Verifies that the fields required by `arch` are present with length `p`.
    pub fn check(&self, arch: Arch, p: usize) -> Result<(), CellError> {
        let need = |v: &Option<Vector>, name: &str| -> Result<(), CellError> {
            match v {
                Some(v) if v.len() == p => Ok(()),
                Some(v) => Err(CellError::Dimension(format!(
                    "{arch} state `{name}` has length {}, expected {p}",
                    v.len()
                ))),
                None => Err(CellError::Dimension(format!(
                    "{arch} state is missing `{name}`"
                ))),
            }
        };
        if self.h.len() != p {
            return Err(CellError::Dimension(format!(
                "{arch} state `h` has length {}, expected {p}",
                self.h.len()
            )));
        }
        match arch {
            Arch::Rnn | Arch::Gru => Ok(()),
            Arch::Lstm => need(&self.c, "c"),
            Arch::Mcrm => {
                need(&self.c, "c")?;
                need(&self.inner_h, "inner_h")
            }
            Arch::Nlstm => {
                need(&self.c, "c")?;
                need(&self.inner_h, "inner_h")?;
                need(&self.inner_c, "inner_c")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    /// Candidate `tanh(x W_xc + h W_hc + b_c)`.
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `h_{t-1} W_hn + b_hn`, the term gated by `r`.
    pub hn: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McrmTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    /// `concat(f ⊙ c_{t-1}, i ⊙ g)`.
    pub x_gru: Vec<f64>,
    pub inner: GruTrace,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlstmTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub x_inner: Vec<f64>,
    pub inner: LstmTrace,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Everything one timestep computed, kept for BPTT and visualisation.
#[derive(Clone, Debug, PartialEq)]
pub enum StepTrace {
    Rnn(RnnTrace),
    Gru(GruTrace),
    Lstm(LstmTrace),
    Nlstm(NlstmTrace),
    Mcrm(McrmTrace),
}

impl StepTrace {
    pub fn hidden(&self) -> &[f64] {
        match self {
            StepTrace::Rnn(t) => &t.h,
            StepTrace::Gru(t) => &t.h,
            StepTrace::Lstm(t) => &t.h,
            StepTrace::Nlstm(t) => &t.h,
            StepTrace::Mcrm(t) => &t.h,
        }
    }

    pub fn input(&self) -> &[f64] {
        match self {
            StepTrace::Rnn(t) => &t.x,
            StepTrace::Gru(t) => &t.x,
            StepTrace::Lstm(t) => &t.x,
            StepTrace::Nlstm(t) => &t.x,
            StepTrace::Mcrm(t) => &t.x,
        }
    }

    /// The state this step hands to the next one.
    pub fn state(&self) -> CellState {
        let v = |s: &[f64]| Vector::from(s);
        match self {
            StepTrace::Rnn(t) => CellState {
                h: v(&t.h),
                c: None,
                inner_h: None,
                inner_c: None,
            },
            StepTrace::Gru(t) => CellState {
                h: v(&t.h),
                c: None,
                inner_h: None,
                inner_c: None,
            },
            StepTrace::Lstm(t) => CellState {
                h: v(&t.h),
                c: Some(v(&t.c)),
                inner_h: None,
                inner_c: None,
            },
            StepTrace::Mcrm(t) => CellState {
                h: v(&t.h),
                c: Some(v(&t.inner.h)),
                inner_h: Some(v(&t.inner.h)),
                inner_c: None,
            },
            StepTrace::Nlstm(t) => CellState {
                h: v(&t.h),
                c: Some(v(&t.inner.h)),
                inner_h: Some(v(&t.inner.h)),
                inner_c: Some(v(&t.inner.c)),
            },
        }
    }

    /// Sigmoid gate activations, for range checks.
    pub fn sigmoid_gates(&self) -> Vec<&[f64]> {
        match self {
            StepTrace::Rnn(_) => vec![],
            StepTrace::Gru(t) => vec![&t.r, &t.z],
            StepTrace::Lstm(t) => vec![&t.i, &t.f, &t.o],
            StepTrace::Mcrm(t) => vec![&t.i, &t.f, &t.o, &t.inner.r, &t.inner.z],
            StepTrace::Nlstm(t) => vec![&t.i, &t.f, &t.o, &t.inner.i, &t.inner.f, &t.inner.o],
        }
    }

    /// Tanh-valued intermediates, for range checks.
    pub fn tanh_outputs(&self) -> Vec<&[f64]> {
        match self {
            StepTrace::Rnn(t) => vec![&t.h],
            StepTrace::Gru(t) => vec![&t.n, &t.h],
            StepTrace::Lstm(t) => vec![&t.g, &t.tanh_c, &t.h],
            StepTrace::Mcrm(t) => vec![&t.g, &t.inner.n, &t.inner.h, &t.tanh_c, &t.h],
            StepTrace::Nlstm(t) => vec![&t.g, &t.inner.g, &t.inner.h, &t.tanh_c, &t.h],
        }
    }
}

pub(crate) fn check_step_inputs(
    arch: Arch,
    m: usize,
    p: usize,
    x: &Vector,
    s: &CellState,
) -> Result<(), CellError> {
    if x.len() != m {
        return Err(NumError::Shape {
            op: "step",
            left: format!("{arch} input dim {m}"),
            right: format!("vector[{}]", x.len()),
        }
        .into());
    }
    s.check(arch, p)
}

/// Fresh parameters with every scalar drawn from `U(-1/√p, 1/√p)`.
pub fn init_params(arch: Arch, m: usize, p: usize, rng: &mut Rng) -> Result<CellParams, CellError> {
    if m == 0 || p == 0 {
        return Err(CellError::Dimension(format!(
            "input and hidden sizes must be positive (got m={m}, p={p})"
        )));
    }
    let mut params = CellParams::zeros(arch, m, p);
    fill_uniform(&mut params, 1.0 / (p as f64).sqrt(), rng);
    Ok(params)
}

pub(crate) fn fill_uniform<P: Parameters + ?Sized>(params: &mut P, bound: f64, rng: &mut Rng) {
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.uniform(-bound, bound);
        }
    }
}

/// Closed-form scalar parameter count of a cell plus a width-`out` affine
/// readout on `h_t`.
pub fn count_params(arch: Arch, m: usize, p: usize, out: usize) -> usize {
    let lstm = |m: usize| 4 * (m * p + p * p + p);
    let gru = |m: usize| 3 * (m * p + p * p + 2 * p);
    let cell = match arch {
        Arch::Rnn => m * p + p * p + p,
        Arch::Lstm => lstm(m),
        Arch::Gru => gru(m),
        Arch::Mcrm => lstm(m) + gru(2 * p),
        Arch::Nlstm => lstm(m) + lstm(2 * p),
    };
    cell + p * out + out
}

/// Like [`count_params`] but parses the architecture name.
pub fn count_params_named(arch: &str, m: usize, p: usize, out: usize) -> Result<usize, CellError> {
    Ok(count_params(arch.parse()?, m, p, out))
}

/// Smallest width whose count is closest to `target`.
pub fn width_for_budget(arch: Arch, m: usize, out: usize, extra: usize, target: usize) -> usize {
    let dist = |p: usize| (count_params(arch, m, p, out) + extra).abs_diff(target);
    let mut best = 1;
    let mut p = 1;
    while count_params(arch, m, p, out) + extra <= target.saturating_mul(2) && p < 100_000 {
        if dist(p) < dist(best) {
            best = p;
        }
        p += 1;
    }
    best
}

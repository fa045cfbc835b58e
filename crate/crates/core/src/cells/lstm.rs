use super::{check_step_inputs, Arch, CellError, CellState, LstmParams, LstmTrace, StepTrace};
use crate::numkit::{sigmoid_scalar, Vector};

pub(crate) fn sigmoid_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|a| *a = sigmoid_scalar(*a));
}

pub(crate) fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|a| *a = a.tanh());
}

/// The four gate activations `(i, f, g, o)` shared by LSTM, NLSTM and MCRM.
pub(crate) fn lstm_gates(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut i = p.input.pre(x, h_prev);
    let mut f = p.forget.pre(x, h_prev);
    let mut g = p.candidate.pre(x, h_prev);
    let mut o = p.output.pre(x, h_prev);
    sigmoid_in_place(&mut i);
    sigmoid_in_place(&mut f);
    tanh_in_place(&mut g);
    sigmoid_in_place(&mut o);
    (i, f, g, o)
}

/// `o ⊙ tanh(c)`, returning `(tanh(c), h)`.
pub(crate) fn expose(o: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    (tanh_c, h)
}

pub(crate) fn lstm_forward(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmTrace {
    let (i, f, g, o) = lstm_gates(p, x, h_prev);
    let c: Vec<f64> = (0..i.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let (tanh_c, h) = expose(&o, &c);
    LstmTrace {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// One LSTM step:
///
/// ```text
/// i = σ(x W_xi + h W_hi + b_i)      f = σ(x W_xf + h W_hf + b_f)
/// c = f ⊙ c_prev + i ⊙ tanh(x W_xc + h W_hc + b_c)
/// o = σ(x W_xo + h W_ho + b_o)      h = o ⊙ tanh(c)
/// ```
pub fn lstm_step(p: &LstmParams, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
    check_step_inputs(Arch::Lstm, p.input_dim(), p.hidden(), x, s)?;
    let trace = StepTrace::Lstm(lstm_forward(p, x, &s.h, s.c_ref()));
    Ok((trace.state(), trace))
}

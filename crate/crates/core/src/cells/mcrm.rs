use super::gru::gru_forward;
use super::lstm::{expose, lstm_gates};
use super::{check_step_inputs, Arch, CellError, CellState, McrmParams, McrmTrace, StepTrace};
use crate::numkit::Vector;

/// `concat(f ⊙ c_prev, i ⊙ g)`; the forget half comes first.
pub(crate) fn gate_interactions(f: &[f64], c_prev: &[f64], i: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * f.len());
    out.extend(f.iter().zip(c_prev).map(|(a, b)| a * b));
    out.extend(i.iter().zip(g).map(|(a, b)| a * b));
    out
}

pub(crate) fn mcrm_forward(p: &McrmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> McrmTrace {
    let (i, f, g, o) = lstm_gates(&p.outer, x, h_prev);
    let x_gru = gate_interactions(&f, c_prev, &i, &g);
    // The previous cell state is the inner GRU's previous hidden state.
    let inner = gru_forward(&p.inner, &x_gru, c_prev);
    let (tanh_c, h) = expose(&o, &inner.h);
    McrmTrace {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        x_gru,
        inner,
        tanh_c,
        h,
    }
}

/// One MCRM step.
///
/// The outer LSTM computes `i, f, g, o` from `(x, h_prev)` as usual, but
/// instead of adding the two gate interactions it concatenates them,
/// `x_gru = concat(f ⊙ c_prev, i ⊙ g)`, and feeds that to an inner GRU whose
/// previous hidden state is `c_prev`. The GRU output becomes the new cell
/// state, `c = h_gru`, and `h = o ⊙ tanh(c)`.
///
/// The returned state carries `c` and `inner_h` as equal copies.
pub fn mcrm_step(p: &McrmParams, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
    check_step_inputs(Arch::Mcrm, p.outer.input_dim(), p.outer.hidden(), x, s)?;
    if s.c != s.inner_h {
        return Err(CellError::Dimension(
            "mcrm state: `c` and `inner_h` must hold the same values".into(),
        ));
    }
    let trace = StepTrace::Mcrm(mcrm_forward(p, x, &s.h, s.c_ref()));
    Ok((trace.state(), trace))
}

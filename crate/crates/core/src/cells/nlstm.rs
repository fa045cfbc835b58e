use super::lstm::{expose, lstm_forward, lstm_gates};
use super::mcrm::gate_interactions;
use super::{check_step_inputs, Arch, CellError, CellState, NlstmParams, NlstmTrace, StepTrace};
use crate::numkit::Vector;

pub(crate) fn nlstm_forward(
    p: &NlstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    inner_c_prev: &[f64],
) -> NlstmTrace {
    let (i, f, g, o) = lstm_gates(&p.outer, x, h_prev);
    let x_inner = gate_interactions(&f, c_prev, &i, &g);
    let inner = lstm_forward(&p.inner, &x_inner, c_prev, inner_c_prev);
    let (tanh_c, h) = expose(&o, &inner.h);
    NlstmTrace {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        x_inner,
        inner,
        tanh_c,
        h,
    }
}

/// One nested-LSTM step: the outer gates feed `concat(f ⊙ c_prev, i ⊙ g)`
/// into an inner LSTM with its own `(inner_h, inner_c)` carry, and the
/// inner hidden state becomes the outer cell state.
pub fn nlstm_step(p: &NlstmParams, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
    check_step_inputs(Arch::Nlstm, p.outer.input_dim(), p.outer.hidden(), x, s)?;
    if s.c != s.inner_h {
        return Err(CellError::Dimension(
            "nlstm state: `c` and `inner_h` must hold the same values".into(),
        ));
    }
    let inner_c = s.inner_c.as_deref().unwrap_or(&[]);
    let trace = StepTrace::Nlstm(nlstm_forward(p, x, &s.h, s.c_ref(), inner_c));
    Ok((trace.state(), trace))
}

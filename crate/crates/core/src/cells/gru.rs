use super::lstm::{sigmoid_in_place, tanh_in_place};
use super::{check_step_inputs, Arch, CellError, CellState, GruParams, GruTrace, StepTrace};
use crate::numkit::Vector;

pub(crate) fn gru_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruTrace {
    let mut r = p.reset.input_part(x);
    let rh = p.reset.hidden_part(h_prev);
    r.iter_mut().zip(&rh).for_each(|(a, b)| *a += b);
    sigmoid_in_place(&mut r);

    let mut z = p.update.input_part(x);
    let zh = p.update.hidden_part(h_prev);
    z.iter_mut().zip(&zh).for_each(|(a, b)| *a += b);
    sigmoid_in_place(&mut z);

    let hn = p.node.hidden_part(h_prev);
    let mut n = p.node.input_part(x);
    n.iter_mut()
        .zip(r.iter().zip(&hn))
        .for_each(|(a, (r, hn))| *a += r * hn);
    tanh_in_place(&mut n);

    let h = (0..n.len())
        .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * n[k])
        .collect();
    GruTrace {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        n,
        hn,
        h,
    }
}

/// One GRU step, keeping separate input and recurrent biases:
///
/// ```text
/// r = σ(x W_ir + b_ir + h W_hr + b_hr)
/// z = σ(x W_iz + b_iz + h W_hz + b_hz)
/// n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
/// h' = (1 - z) ⊙ h + z ⊙ n
/// ```
pub fn gru_step(p: &GruParams, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
    check_step_inputs(Arch::Gru, p.input_dim(), p.hidden(), x, s)?;
    let trace = StepTrace::Gru(gru_forward(p, x, &s.h));
    Ok((trace.state(), trace))
}

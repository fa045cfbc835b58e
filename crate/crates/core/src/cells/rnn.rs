use super::{check_step_inputs, Arch, CellError, CellState, RnnParams, RnnTrace, StepTrace};
use crate::numkit::Vector;

pub(crate) fn rnn_forward(p: &RnnParams, x: &[f64], h_prev: &[f64]) -> RnnTrace {
    let mut h = p.hidden.pre(x, h_prev);
    h.iter_mut().for_each(|v| *v = v.tanh());
    RnnTrace {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        h,
    }
}

/// `h_t = tanh(x W_xh + h_{t-1} W_hh + b_h)`.
pub fn rnn_step(p: &RnnParams, x: &Vector, s: &CellState) -> Result<(CellState, StepTrace), CellError> {
    check_step_inputs(Arch::Rnn, p.hidden.w_x.rows(), p.hidden.b.len(), x, s)?;
    let trace = StepTrace::Rnn(rnn_forward(p, x, &s.h));
    Ok((trace.state(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;

    #[test]
    fn zero_params_give_zero() {
        let p = RnnParams::zeros(2, 3);
        let (s, _) = rnn_step(&p, &vec![1.0, -2.0].into(), &CellState::zeros(Arch::Rnn, 3)).unwrap();
        assert_eq!(s.h.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn identity_input_weight_is_tanh() {
        let mut p = RnnParams::zeros(3, 3);
        p.hidden.w_x = Matrix::identity(3);
        let x: Vector = vec![0.1, -0.2, 0.05].into();
        let (s, _) = rnn_step(&p, &x, &CellState::zeros(Arch::Rnn, 3)).unwrap();
        for (h, x) in s.h.iter().zip(x.iter()) {
            assert_eq!(*h, x.tanh());
        }
    }

    #[test]
    fn scalar_oracle() {
        let mut p = RnnParams::zeros(1, 1);
        p.hidden.w_x.set(0, 0, 0.5);
        p.hidden.w_h.set(0, 0, -0.3);
        p.hidden.b[0] = 0.1;
        let mut s = CellState::zeros(Arch::Rnn, 1);
        s.h[0] = 0.4;
        let (next, _) = rnn_step(&p, &vec![1.0].into(), &s).unwrap();
        let expected = (1.0f64 * 0.5 + 0.4 * -0.3 + 0.1).tanh();
        assert!((next.h[0] - expected).abs() < 1e-15);
    }
}

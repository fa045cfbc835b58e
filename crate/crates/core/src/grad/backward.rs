//! Hand-derived reverse passes for one timestep of each cell.

use crate::cells::{
    Affine, CellParams, GruGate, GruParams, GruTrace, LstmParams, LstmTrace, McrmTrace,
    NlstmTrace, RnnTrace, StepTrace,
};

/// Gradient flowing backwards through the recurrent carry, excluding `h`.
///
/// `c` is the gradient w.r.t. the cell state. For the nested cells the
/// cell state and the inner hidden state are the same variable, so both
/// routes accumulate here. `inner_c` is the NLSTM inner cell state.
#[derive(Clone, Debug, Default)]
pub(crate) struct Carry {
    pub c: Vec<f64>,
    pub inner_c: Vec<f64>,
}

impl Carry {
    pub fn zeros(p: usize) -> Self {
        Carry {
            c: vec![0.0; p],
            inner_c: vec![0.0; p],
        }
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `d ⊙ s ⊙ (1 - s)`: gradient through a sigmoid with output `s`.
fn through_sigmoid(d: &[f64], s: &[f64]) -> Vec<f64> {
    d.iter().zip(s).map(|(d, s)| d * s * (1.0 - s)).collect()
}

/// `d ⊙ (1 - t²)`: gradient through a tanh with output `t`.
fn through_tanh(d: &[f64], t: &[f64]) -> Vec<f64> {
    d.iter().zip(t).map(|(d, t)| d * (1.0 - t * t)).collect()
}

fn affine_backward(
    a: &Affine,
    ga: &mut Affine,
    d: &[f64],
    x: &[f64],
    h: &[f64],
    dx: Option<&mut [f64]>,
    dh: &mut [f64],
) {
    ga.w_x.add_outer(x, d);
    ga.w_h.add_outer(h, d);
    ga.b.iter_mut().zip(d).for_each(|(g, d)| *g += d);
    if let Some(dx) = dx {
        a.w_x.matvec_acc(d, dx);
    }
    a.w_h.matvec_acc(d, dh);
}

/// `d_in` reaches `x W_x + b_x`, `d_hid` reaches `h W_h + b_h`.
#[allow(clippy::too_many_arguments)]
fn gru_gate_backward(
    g: &GruGate,
    gg: &mut GruGate,
    d_in: &[f64],
    d_hid: &[f64],
    x: &[f64],
    h: &[f64],
    dx: Option<&mut [f64]>,
    dh: &mut [f64],
) {
    gg.w_x.add_outer(x, d_in);
    gg.b_x.iter_mut().zip(d_in).for_each(|(g, d)| *g += d);
    gg.w_h.add_outer(h, d_hid);
    gg.b_h.iter_mut().zip(d_hid).for_each(|(g, d)| *g += d);
    if let Some(dx) = dx {
        g.w_x.matvec_acc(d_in, dx);
    }
    g.w_h.matvec_acc(d_hid, dh);
}

fn rnn_backward(
    p: &crate::cells::RnnParams,
    gp: &mut crate::cells::RnnParams,
    t: &RnnTrace,
    dh: &[f64],
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let da = through_tanh(dh, &t.h);
    let mut dh_prev = vec![0.0; dh.len()];
    affine_backward(&p.hidden, &mut gp.hidden, &da, &t.x, &t.h_prev, dx, &mut dh_prev);
    dh_prev
}

/// Backward through `h' = (1 - z) ⊙ h + z ⊙ n`; returns `dh_prev`.
fn gru_backward(
    p: &GruParams,
    gp: &mut GruParams,
    t: &GruTrace,
    dh: &[f64],
    mut dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let len = dh.len();
    let mut dh_prev: Vec<f64> = (0..len).map(|k| dh[k] * (1.0 - t.z[k])).collect();
    let dn: Vec<f64> = mul(dh, &t.z);
    let dz: Vec<f64> = (0..len).map(|k| dh[k] * (t.n[k] - t.h_prev[k])).collect();

    let dan = through_tanh(&dn, &t.n);
    let dhn = mul(&dan, &t.r);
    let dr = mul(&dan, &t.hn);
    let dar = through_sigmoid(&dr, &t.r);
    let daz = through_sigmoid(&dz, &t.z);

    gru_gate_backward(&p.reset, &mut gp.reset, &dar, &dar, &t.x, &t.h_prev, dx.as_deref_mut(), &mut dh_prev);
    gru_gate_backward(&p.update, &mut gp.update, &daz, &daz, &t.x, &t.h_prev, dx.as_deref_mut(), &mut dh_prev);
    gru_gate_backward(&p.node, &mut gp.node, &dan, &dhn, &t.x, &t.h_prev, dx, &mut dh_prev);
    dh_prev
}

/// Gradients w.r.t. the four outer gate activations.
struct GateGrads {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn lstm_gates_backward(
    p: &LstmParams,
    gp: &mut LstmParams,
    x: &[f64],
    h_prev: &[f64],
    (i, f, g, o): (&[f64], &[f64], &[f64], &[f64]),
    d: GateGrads,
    mut dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dh_prev = vec![0.0; i.len()];
    let dai = through_sigmoid(&d.i, i);
    let daf = through_sigmoid(&d.f, f);
    let dag = through_tanh(&d.g, g);
    let dao = through_sigmoid(&d.o, o);
    affine_backward(&p.input, &mut gp.input, &dai, x, h_prev, dx.as_deref_mut(), &mut dh_prev);
    affine_backward(&p.forget, &mut gp.forget, &daf, x, h_prev, dx.as_deref_mut(), &mut dh_prev);
    affine_backward(&p.candidate, &mut gp.candidate, &dag, x, h_prev, dx.as_deref_mut(), &mut dh_prev);
    affine_backward(&p.output, &mut gp.output, &dao, x, h_prev, dx, &mut dh_prev);
    dh_prev
}

/// Gradient reaching `c` through `h = o ⊙ tanh(c)`, plus `dc_next`.
fn cell_total(dh: &[f64], o: &[f64], tanh_c: &[f64], dc_next: &[f64]) -> Vec<f64> {
    (0..dh.len())
        .map(|k| dc_next[k] + dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]))
        .collect()
}

/// Plain LSTM. On entry `dc` holds `∂L/∂c_t`; on exit `∂L/∂c_{t-1}`.
fn lstm_backward(
    p: &LstmParams,
    gp: &mut LstmParams,
    t: &LstmTrace,
    dh: &[f64],
    dc: &mut [f64],
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let dct = cell_total(dh, &t.o, &t.tanh_c, dc);
    let grads = GateGrads {
        i: mul(&dct, &t.g),
        f: mul(&dct, &t.c_prev),
        g: mul(&dct, &t.i),
        o: mul(dh, &t.tanh_c),
    };
    for k in 0..dc.len() {
        dc[k] = dct[k] * t.f[k];
    }
    lstm_gates_backward(p, gp, &t.x, &t.h_prev, (&t.i, &t.f, &t.g, &t.o), grads, dx)
}

/// Splits the gradient of `concat(f ⊙ c_prev, i ⊙ g)` back onto `f`,
/// `c_prev`, `i` and the candidate. Returns the gate gradients (without
/// `o`) and the direct contribution to `∂L/∂c_prev`.
fn split_interactions(
    dcat: &[f64],
    f: &[f64],
    c_prev: &[f64],
    i: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = f.len();
    let (dfc, dig) = dcat.split_at(p);
    let df = mul(dfc, c_prev);
    let dc_prev = mul(dfc, f);
    let di = mul(dig, g);
    let dg = mul(dig, i);
    (di, df, dg, dc_prev)
}

fn mcrm_backward(
    p: &crate::cells::McrmParams,
    gp: &mut crate::cells::McrmParams,
    t: &McrmTrace,
    dh: &[f64],
    dc: &mut [f64],
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let dct = cell_total(dh, &t.o, &t.tanh_c, dc);
    let mut dx_gru = vec![0.0; t.x_gru.len()];
    let dc_recurrent = gru_backward(&p.inner, &mut gp.inner, &t.inner, &dct, Some(&mut dx_gru));
    let (di, df, dg, dc_direct) = split_interactions(&dx_gru, &t.f, &t.c_prev, &t.i, &t.g);
    for k in 0..dc.len() {
        dc[k] = dc_recurrent[k] + dc_direct[k];
    }
    let grads = GateGrads {
        i: di,
        f: df,
        g: dg,
        o: mul(dh, &t.tanh_c),
    };
    lstm_gates_backward(&p.outer, &mut gp.outer, &t.x, &t.h_prev, (&t.i, &t.f, &t.g, &t.o), grads, dx)
}

fn nlstm_backward(
    p: &crate::cells::NlstmParams,
    gp: &mut crate::cells::NlstmParams,
    t: &NlstmTrace,
    dh: &[f64],
    carry: &mut Carry,
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let dct = cell_total(dh, &t.o, &t.tanh_c, &carry.c);
    let mut dx_inner = vec![0.0; t.x_inner.len()];
    let dc_recurrent = lstm_backward(
        &p.inner,
        &mut gp.inner,
        &t.inner,
        &dct,
        &mut carry.inner_c,
        Some(&mut dx_inner),
    );
    let (di, df, dg, dc_direct) = split_interactions(&dx_inner, &t.f, &t.c_prev, &t.i, &t.g);
    for k in 0..carry.c.len() {
        carry.c[k] = dc_recurrent[k] + dc_direct[k];
    }
    let grads = GateGrads {
        i: di,
        f: df,
        g: dg,
        o: mul(dh, &t.tanh_c),
    };
    lstm_gates_backward(&p.outer, &mut gp.outer, &t.x, &t.h_prev, (&t.i, &t.f, &t.g, &t.o), grads, dx)
}

/// Backward through one step: accumulates parameter gradients into `grads`,
/// updates `carry` from step `t` to `t-1`, optionally accumulates `∂L/∂x`,
/// and returns `∂L/∂h_{t-1}`.
pub(crate) fn step_backward(
    params: &CellParams,
    grads: &mut CellParams,
    trace: &StepTrace,
    dh: &[f64],
    carry: &mut Carry,
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    match (params, grads, trace) {
        (CellParams::Rnn(p), CellParams::Rnn(g), StepTrace::Rnn(t)) => rnn_backward(p, g, t, dh, dx),
        (CellParams::Gru(p), CellParams::Gru(g), StepTrace::Gru(t)) => gru_backward(p, g, t, dh, dx),
        (CellParams::Lstm(p), CellParams::Lstm(g), StepTrace::Lstm(t)) => {
            lstm_backward(p, g, t, dh, &mut carry.c, dx)
        }
        (CellParams::Mcrm(p), CellParams::Mcrm(g), StepTrace::Mcrm(t)) => {
            mcrm_backward(p, g, t, dh, &mut carry.c, dx)
        }
        (CellParams::Nlstm(p), CellParams::Nlstm(g), StepTrace::Nlstm(t)) => {
            nlstm_backward(p, g, t, dh, carry, dx)
        }
        _ => unreachable!("parameter, gradient and trace architectures always agree"),
    }
}

//! Exact reverse-mode gradients through unrolled sequences, and a central
//! difference oracle to check them against.
//!
//! Losses are summed over the sequences of a batch. A sequence scored at
//! every timestep contributes the mean of its per-step losses.

mod backward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{CellError, CellState, StepTrace};
use crate::model::{LossKind, Model, SeqInput, Target};
use crate::params::Parameters;

use backward::{step_backward, Carry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("non-finite value in sequence {sequence} at timestep {timestep}")]
    NonFinite { sequence: usize, timestep: usize },
    #[error("sequence {sequence}: {message}")]
    Shape { sequence: usize, message: String },
    #[error("batch has {inputs} inputs but {targets} targets")]
    BatchMismatch { inputs: usize, targets: usize },
    #[error(transparent)]
    Cell(#[from] CellError),
}

/// Gradient accumulators shaped exactly like the model they belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub model: Model,
}

impl GradientSet {
    pub fn zeros_like(model: &Model) -> Self {
        let mut model = model.clone();
        model.zero();
        GradientSet { model }
    }

    /// Elementwise `self += other`, tensor by tensor in a fixed order.
    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Global L2 norm over every tensor.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Parameters for GradientSet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.model.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.model.tensors_mut()
    }
}

/// Readout result at one scored timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadStep {
    pub timestep: usize,
    /// Raw readout: the prediction for `mse`, the logits for `ce`.
    pub output: Vec<f64>,
    pub loss: f64,
}

/// Everything one unrolled sequence computed.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    pub steps: Vec<StepTrace>,
    pub head: Vec<HeadStep>,
}

impl Tape {
    pub fn final_state(&self, init: &CellState) -> CellState {
        self.steps.last().map_or_else(|| init.clone(), StepTrace::state)
    }
}

/// Summed loss, summed gradients and the carried-out states of a batch.
#[derive(Clone, Debug)]
pub struct BatchGrad {
    pub loss_sum: f64,
    pub grads: GradientSet,
    pub final_states: Vec<CellState>,
}

fn shape_err(sequence: usize, message: impl Into<String>) -> GradError {
    GradError::Shape {
        sequence,
        message: message.into(),
    }
}

/// Input vector at step `t`: a dense row, an embedding row or a one-hot.
fn input_at<'a>(model: &'a Model, input: &'a SeqInput, t: usize, scratch: &'a mut Vec<f64>) -> &'a [f64] {
    match input {
        SeqInput::Dense(rows) => &rows[t],
        SeqInput::Tokens(ids) => match &model.embedding {
            Some(e) => e.row(ids[t]),
            None => {
                scratch.clear();
                scratch.resize(model.input_dim(), 0.0);
                scratch[ids[t]] = 1.0;
                scratch
            }
        },
    }
}

pub(crate) fn validate(
    model: &Model,
    sequence: usize,
    input: &SeqInput,
    target: Option<(&Target, LossKind)>,
    init: &CellState,
) -> Result<(), GradError> {
    let m = model.input_dim();
    let out = model.output_dim();
    if input.is_empty() {
        return Err(shape_err(sequence, "empty input sequence"));
    }
    match input {
        SeqInput::Dense(rows) => {
            if let Some((t, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
                return Err(shape_err(
                    sequence,
                    format!("timestep {t} has {} features, model expects {m}", row.len()),
                ));
            }
        }
        SeqInput::Tokens(ids) => {
            let limit = model.embedding.as_ref().map_or(m, |e| e.rows());
            if let Some(id) = ids.iter().find(|&&id| id >= limit) {
                return Err(shape_err(sequence, format!("token id {id} outside vocabulary of {limit}")));
            }
        }
    }
    init.check(model.arch(), model.hidden())
        .map_err(|e| shape_err(sequence, e.to_string()))?;
    if let Some((target, loss)) = target {
        match (loss, target) {
            (LossKind::Mse, Target::Regression(y)) if y.len() == out => {}
            (LossKind::Mse, Target::Regression(y)) => {
                return Err(shape_err(sequence, format!("regression target of width {} vs readout {out}", y.len())))
            }
            (LossKind::Ce, Target::Class(c)) if *c < out => {}
            (LossKind::Ce, Target::Class(c)) => {
                return Err(shape_err(sequence, format!("class {c} outside {out} logits")))
            }
            (LossKind::Ce, Target::Sequence(labels)) => {
                if labels.len() != input.len() {
                    return Err(shape_err(
                        sequence,
                        format!("{} labels for {} timesteps", labels.len(), input.len()),
                    ));
                }
                if let Some(c) = labels.iter().find(|&&c| c >= out) {
                    return Err(shape_err(sequence, format!("label {c} outside {out} logits")));
                }
            }
            (loss, _) => {
                return Err(shape_err(sequence, format!("target kind does not fit the {loss} loss")))
            }
        }
    }
    Ok(())
}

/// Runs the cell over `input` from `init`, keeping every step's trace.
pub fn forward_sequence(
    model: &Model,
    input: &SeqInput,
    init: &CellState,
) -> Result<Vec<StepTrace>, GradError> {
    validate(model, 0, input, None, init)?;
    unroll(model, 0, input, init)
}

fn unroll(model: &Model, sequence: usize, input: &SeqInput, init: &CellState) -> Result<Vec<StepTrace>, GradError> {
    let mut steps: Vec<StepTrace> = Vec::with_capacity(input.len());
    let mut scratch = Vec::new();
    let mut state = init.clone();
    for t in 0..input.len() {
        let x = input_at(model, input, t, &mut scratch);
        let trace = model.cell.step_raw(x, &state);
        if !trace.hidden().iter().all(|v| v.is_finite()) {
            return Err(GradError::NonFinite { sequence, timestep: t });
        }
        state = trace.state();
        steps.push(trace);
    }
    Ok(steps)
}

fn log_softmax_loss(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let probs = logits.iter().map(|z| (z - lse).exp()).collect();
    (lse - logits[label], probs)
}

/// Scores a tape; returns the sequence loss and the head entries, plus
/// `∂L/∂output` per scored step when `want_grad` is set.
fn score(
    model: &Model,
    sequence: usize,
    steps: &[StepTrace],
    target: &Target,
    want_grad: bool,
) -> Result<(f64, Vec<HeadStep>, Vec<Vec<f64>>), GradError> {
    let last = steps.len() - 1;
    let mut head = Vec::new();
    let mut douts = Vec::new();
    let mut total = 0.0;
    match target {
        Target::Regression(y) => {
            let pred = model.readout.apply(steps[last].hidden());
            let k = pred.len() as f64;
            let loss = pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k;
            if want_grad {
                douts.push(pred.iter().zip(y).map(|(a, b)| 2.0 * (a - b) / k).collect());
            }
            total = loss;
            head.push(HeadStep {
                timestep: last,
                output: pred,
                loss,
            });
        }
        Target::Class(c) => {
            let logits = model.readout.apply(steps[last].hidden());
            let (loss, mut probs) = log_softmax_loss(&logits, *c);
            if want_grad {
                probs[*c] -= 1.0;
                douts.push(probs);
            }
            total = loss;
            head.push(HeadStep {
                timestep: last,
                output: logits,
                loss,
            });
        }
        Target::Sequence(labels) => {
            let weight = 1.0 / labels.len() as f64;
            for (t, (step, &c)) in steps.iter().zip(labels).enumerate() {
                let logits = model.readout.apply(step.hidden());
                let (loss, mut probs) = log_softmax_loss(&logits, c);
                if want_grad {
                    probs[c] -= 1.0;
                    probs.iter_mut().for_each(|v| *v *= weight);
                    douts.push(probs);
                }
                if !loss.is_finite() {
                    return Err(GradError::NonFinite { sequence, timestep: t });
                }
                total += loss;
                head.push(HeadStep {
                    timestep: t,
                    output: logits,
                    loss,
                });
            }
            total *= weight;
        }
    }
    if !total.is_finite() {
        return Err(GradError::NonFinite {
            sequence,
            timestep: head.last().map_or(last, |h| h.timestep),
        });
    }
    Ok((total, head, douts))
}

/// Forward pass and loss of one sequence from `init`.
pub fn run_sequence(
    model: &Model,
    input: &SeqInput,
    target: &Target,
    loss: LossKind,
    init: &CellState,
) -> Result<(f64, Tape), GradError> {
    validate(model, 0, input, Some((target, loss)), init)?;
    let steps = unroll(model, 0, input, init)?;
    let (value, head, _) = score(model, 0, &steps, target, false)?;
    Ok((value, Tape { steps, head }))
}

/// Loss of one sequence from a zero state.
pub fn sequence_loss(model: &Model, input: &SeqInput, target: &Target, loss: LossKind) -> Result<f64, GradError> {
    let init = CellState::zeros(model.arch(), model.hidden());
    run_sequence(model, input, target, loss, &init).map(|(l, _)| l)
}

/// Summed loss over a batch, each sequence from a zero state.
pub fn batch_loss(model: &Model, inputs: &[SeqInput], targets: &[Target], loss: LossKind) -> Result<f64, GradError> {
    if inputs.len() != targets.len() {
        return Err(GradError::BatchMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    let mut total = 0.0;
    for (s, (x, y)) in inputs.iter().zip(targets).enumerate() {
        let init = CellState::zeros(model.arch(), model.hidden());
        validate(model, s, x, Some((y, loss)), &init)?;
        let steps = unroll(model, s, x, &init)?;
        total += score(model, s, &steps, y, false)?.0;
    }
    Ok(total)
}

/// Loss and exact gradient of one sequence; gradients are added to `grads`.
fn backprop_one(
    model: &Model,
    sequence: usize,
    input: &SeqInput,
    target: &Target,
    init: &CellState,
    grads: &mut GradientSet,
) -> Result<(f64, CellState), GradError> {
    let steps = unroll(model, sequence, input, init)?;
    let (loss, head, douts) = score(model, sequence, &steps, target, true)?;

    let p = model.hidden();
    let need_dx = model.embedding.is_some();
    let mut dh = vec![0.0; p];
    let mut carry = Carry::zeros(p);
    let mut scored = head.iter().zip(&douts).rev().peekable();
    let GradientSet { model: g } = grads;
    for (t, step) in steps.iter().enumerate().rev() {
        if let Some((h, dout)) = scored.next_if(|(h, _)| h.timestep == t) {
            debug_assert_eq!(h.timestep, t);
            g.readout.w.add_outer(step.hidden(), dout);
            g.readout.b.iter_mut().zip(dout.iter()).for_each(|(a, b)| *a += b);
            model.readout.w.matvec_acc(dout, &mut dh);
        }
        let mut dx = if need_dx { Some(vec![0.0; model.input_dim()]) } else { None };
        dh = step_backward(&model.cell, &mut g.cell, step, &dh, &mut carry, dx.as_deref_mut());
        if let (Some(dx), SeqInput::Tokens(ids), Some(ge)) = (dx, input, g.embedding.as_mut()) {
            ge.row_mut(ids[t]).iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
    }
    let final_state = steps.last().map(StepTrace::state).unwrap_or_else(|| init.clone());
    Ok((loss, final_state))
}

/// Exact loss gradient of a batch starting every sequence from `inits`.
///
/// Per-sequence gradients are accumulated left to right in batch order.
pub fn backprop_from_states(
    model: &Model,
    inputs: &[SeqInput],
    targets: &[Target],
    loss: LossKind,
    inits: &[CellState],
) -> Result<BatchGrad, GradError> {
    if inputs.len() != targets.len() || inputs.len() != inits.len() {
        return Err(GradError::BatchMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    for (s, ((x, y), init)) in inputs.iter().zip(targets).zip(inits).enumerate() {
        validate(model, s, x, Some((y, loss)), init)?;
    }
    let mut grads = GradientSet::zeros_like(model);
    let mut loss_sum = 0.0;
    let mut final_states = Vec::with_capacity(inputs.len());
    for (s, ((x, y), init)) in inputs.iter().zip(targets).zip(inits).enumerate() {
        let mut own = GradientSet::zeros_like(model);
        let (l, state) = backprop_one(model, s, x, y, init, &mut own)?;
        grads.accumulate(&own);
        loss_sum += l;
        final_states.push(state);
    }
    Ok(BatchGrad {
        loss_sum,
        grads,
        final_states,
    })
}

/// Summed batch loss and its exact gradient, every sequence from a zero
/// state.
pub fn backprop_sequence(
    model: &Model,
    inputs: &[SeqInput],
    targets: &[Target],
    loss: LossKind,
) -> Result<(f64, GradientSet), GradError> {
    let inits = vec![CellState::zeros(model.arch(), model.hidden()); inputs.len()];
    let out = backprop_from_states(model, inputs, targets, loss, &inits)?;
    Ok((out.loss_sum, out.grads))
}

/// Central differences `(f(θ+ε) - f(θ-ε)) / 2ε` for every scalar of `params`.
pub fn central_difference<P, F>(params: &P, eps: f64, mut f: F) -> P
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = params.clone();
    let mut out = params.clone();
    let shape: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, len) in shape.into_iter().enumerate() {
        for k in 0..len {
            let orig = params.tensors()[ti][k];
            probe.tensors_mut()[ti][k] = orig + eps;
            let up = f(&probe);
            probe.tensors_mut()[ti][k] = orig - eps;
            let down = f(&probe);
            probe.tensors_mut()[ti][k] = orig;
            out.tensors_mut()[ti][k] = (up - down) / (2.0 * eps);
        }
    }
    out
}

/// Finite-difference gradient of [`batch_loss`]. `eps` must lie in
/// `[1e-7, 1e-3]`.
pub fn finite_diff_grad(
    model: &Model,
    inputs: &[SeqInput],
    targets: &[Target],
    loss: LossKind,
    eps: f64,
) -> Result<GradientSet, GradError> {
    assert!((1e-7..=1e-3).contains(&eps), "finite-difference step {eps} outside [1e-7, 1e-3]");
    batch_loss(model, inputs, targets, loss)?;
    let g = central_difference(model, eps, |m| {
        batch_loss(m, inputs, targets, loss).unwrap_or(f64::NAN)
    });
    Ok(GradientSet { model: g })
}

/// Relative error of `a` against the reference `b`, tensor by tensor:
/// `max_k |a_k - b_k| / (max_k |b_k| + 1e-8)`, maximised over tensors.
///
/// Each tensor is normalised by its own largest entry rather than entry by
/// entry, since a central difference carries absolute rounding noise of
/// roughly `1e-16 · |L| / ε` that swamps near-zero entries.
pub fn max_relative_error(a: &GradientSet, reference: &GradientSet) -> f64 {
    a.tensors()
        .iter()
        .zip(reference.tensors())
        .map(|(x, y)| {
            let diff = x.iter().zip(y.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            diff / (scale + 1e-8)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::Arch;
    use crate::model::ModelSpec;
    use crate::numkit::{rand_uniform, Rng, Vector};

    fn toy(arch: Arch, seed: u64, out: usize) -> (Model, Vec<SeqInput>) {
        let mut rng = Rng::seed_from_u64(seed);
        let spec = ModelSpec {
            arch,
            input: 3,
            hidden: 4,
            output: out,
            vocab: None,
        };
        let model = Model::init(spec, &mut rng).unwrap();
        let inputs = (0..2)
            .map(|_| SeqInput::Dense((0..5).map(|_| rand_uniform(&mut rng, -1.0, 1.0, 3).unwrap()).collect()))
            .collect();
        (model, inputs)
    }

    #[test]
    fn quadratic_toy() {
        let g = central_difference(&vec![3.0], 1e-5, |t| t[0] * t[0]);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn difference_error_shrinks_with_step() {
        let f = |t: &Vec<f64>| t[0].sin() * t[0].exp();
        let exact = 0.7f64.cos() * 0.7f64.exp() + 0.7f64.sin() * 0.7f64.exp();
        let coarse = (central_difference(&vec![0.7], 1e-3, f)[0] - exact).abs();
        let fine = (central_difference(&vec![0.7], 1e-5, f)[0] - exact).abs();
        assert!(fine < coarse / 100.0, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn recurrent_weights_get_no_gradient_from_one_step() {
        for arch in Arch::ALL {
            let (model, inputs) = toy(arch, 3, 1);
            let SeqInput::Dense(rows) = &inputs[0] else { unreachable!() };
            let one = vec![SeqInput::Dense(rows[..1].to_vec())];
            let (_, g) = backprop_sequence(&model, &one, &[Target::Regression(vec![0.5])], LossKind::Mse).unwrap();
            let recurrent: Vec<&[f64]> = match &g.model.cell {
                crate::cells::CellParams::Rnn(p) => vec![p.hidden.w_h.as_slice()],
                crate::cells::CellParams::Gru(p) => p.gates().iter().map(|g| g.w_h.as_slice()).collect(),
                crate::cells::CellParams::Lstm(p) => p.gates().iter().map(|g| g.w_h.as_slice()).collect(),
                crate::cells::CellParams::Mcrm(p) => p.outer.gates().iter().map(|g| g.w_h.as_slice()).collect(),
                crate::cells::CellParams::Nlstm(p) => p.outer.gates().iter().map(|g| g.w_h.as_slice()).collect(),
            };
            for w in recurrent {
                assert!(w.iter().all(|v| *v == 0.0), "{arch}");
            }
        }
    }

    #[test]
    fn duplicated_sequence_doubles_gradient() {
        for arch in Arch::ALL {
            let (model, inputs) = toy(arch, 4, 3);
            let single = [inputs[0].clone()];
            let double = [inputs[0].clone(), inputs[0].clone()];
            let t = Target::Sequence(vec![0, 1, 2, 1, 0]);
            let (l1, g1) = backprop_sequence(&model, &single, std::slice::from_ref(&t), LossKind::Ce).unwrap();
            let (l2, g2) = backprop_sequence(&model, &double, &[t.clone(), t], LossKind::Ce).unwrap();
            assert_eq!(l2, 2.0 * l1);
            for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
                assert_eq!(2.0 * a, b);
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for arch in Arch::ALL {
            let (model, inputs) = toy(arch, 9, 3);
            let targets = vec![Target::Class(2), Target::Class(0)];
            let (_, bp) = backprop_sequence(&model, &inputs, &targets, LossKind::Ce).unwrap();
            let fd = finite_diff_grad(&model, &inputs, &targets, LossKind::Ce, 1e-5).unwrap();
            let err = max_relative_error(&bp, &fd);
            assert!(err <= 1e-5, "{arch}: {err}");
        }
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from_u64(12);
        for arch in Arch::ALL {
            let spec = ModelSpec {
                arch,
                input: 3,
                hidden: 4,
                output: 5,
                vocab: Some(5),
            };
            let model = Model::init(spec, &mut rng).unwrap();
            let inputs = vec![SeqInput::Tokens(vec![0, 3, 3, 1]), SeqInput::Tokens(vec![4, 2, 0, 0])];
            let targets = vec![Target::Sequence(vec![3, 3, 1, 2]), Target::Sequence(vec![2, 0, 0, 4])];
            let (_, bp) = backprop_sequence(&model, &inputs, &targets, LossKind::Ce).unwrap();
            let fd = finite_diff_grad(&model, &inputs, &targets, LossKind::Ce, 1e-5).unwrap();
            assert!(max_relative_error(&bp, &fd) <= 1e-5, "{arch}");
        }
    }

    #[test]
    fn one_hot_tokens_equal_dense_one_hot() {
        let (model, _) = toy(Arch::Mcrm, 5, 3);
        let ids = vec![2, 0, 1];
        let dense = SeqInput::Dense(
            ids.iter()
                .map(|&i| {
                    let mut v = Vector::zeros(3);
                    v[i] = 1.0;
                    v
                })
                .collect(),
        );
        let t = Target::Class(1);
        let a = sequence_loss(&model, &SeqInput::Tokens(ids), &t, LossKind::Ce).unwrap();
        let b = sequence_loss(&model, &dense, &t, LossKind::Ce).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_incompatible_targets() {
        let (model, inputs) = toy(Arch::Gru, 1, 2);
        let bad = [
            (Target::Class(0), LossKind::Mse),
            (Target::Regression(vec![1.0]), LossKind::Ce),
            (Target::Class(2), LossKind::Ce),
            (Target::Sequence(vec![0; 4]), LossKind::Ce),
        ];
        for (t, l) in bad {
            assert!(matches!(
                backprop_sequence(&model, &inputs[..1], &[t], l),
                Err(GradError::Shape { .. })
            ));
        }
        assert!(matches!(
            backprop_sequence(&model, &inputs, &[Target::Class(0)], LossKind::Ce),
            Err(GradError::BatchMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_activations_name_the_timestep() {
        let (mut model, _) = toy(Arch::Rnn, 2, 1);
        let rows = vec![Vector::zeros(3), Vector::zeros(3), vec![f64::NAN, 0.0, 0.0].into()];
        let err = backprop_sequence(&model, &[SeqInput::Dense(rows)], &[Target::Regression(vec![0.0])], LossKind::Mse)
            .unwrap_err();
        assert_eq!(err, GradError::NonFinite { sequence: 0, timestep: 2 });
        model.readout.b[0] = f64::INFINITY;
        let rows = vec![Vector::zeros(3); 2];
        let err = backprop_sequence(&model, &[SeqInput::Dense(rows)], &[Target::Regression(vec![0.0])], LossKind::Mse)
            .unwrap_err();
        assert_eq!(err, GradError::NonFinite { sequence: 0, timestep: 1 });
    }

    #[test]
    fn backward_leaves_inputs_alone() {
        let (model, inputs) = toy(Arch::Nlstm, 8, 1);
        let (m0, i0) = (model.clone(), inputs.clone());
        let targets = vec![Target::Regression(vec![0.1]), Target::Regression(vec![-0.3])];
        backprop_sequence(&model, &inputs, &targets, LossKind::Mse).unwrap();
        assert_eq!(model, m0);
        assert_eq!(inputs, i0);
    }
}

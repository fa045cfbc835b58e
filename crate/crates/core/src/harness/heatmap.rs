//! Memory-state heat maps: one row per neuron, one column per input step.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cells::{Arch, CellState, StepTrace};
use crate::grad::forward_sequence;
use crate::model::{Model, SeqInput};

use super::HarnessError;

/// A neuron and its score under one of the ranking rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeuronScore {
    pub neuron: usize,
    pub score: f64,
}

/// `p × T` values of one memory state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub arch: Arch,
    pub state: &'static str,
    pub values: Vec<Vec<f64>>,
}

impl Grid {
    pub fn neurons(&self) -> usize {
        self.values.len()
    }

    pub fn steps(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

fn memory_of(trace: &StepTrace) -> Vec<Vec<f64>> {
    match trace {
        StepTrace::Rnn(t) => vec![t.h.clone()],
        StepTrace::Gru(t) => vec![t.h.clone()],
        StepTrace::Lstm(t) => vec![t.c.clone()],
        StepTrace::Mcrm(t) => vec![t.inner.h.clone()],
        StepTrace::Nlstm(t) => vec![t.inner.h.clone(), t.inner.c.iter().map(|v| v.tanh()).collect()],
    }
}

fn state_names(arch: Arch) -> &'static [&'static str] {
    match arch {
        Arch::Rnn | Arch::Gru => &["h"],
        Arch::Lstm => &["c"],
        Arch::Mcrm => &["h_gru"],
        Arch::Nlstm => &["c_outer", "tanh_c_inner"],
    }
}

/// Runs `input` from a zero state and records the memory state of every
/// step: `h` for RNN and GRU, `c` for LSTM, the inner GRU state for MCRM,
/// and for NLSTM the outer cell state and `tanh` of the inner one.
pub fn memory_grids(model: &Model, input: &SeqInput) -> Result<Vec<Grid>, HarnessError> {
    if input.is_empty() {
        return Err(HarnessError::Data("heat-map input is empty".into()));
    }
    let arch = model.arch();
    let init = CellState::zeros(arch, model.hidden());
    let steps = forward_sequence(model, input, &init)?;
    let names = state_names(arch);
    let p = model.hidden();
    let mut grids: Vec<Grid> = names
        .iter()
        .map(|&state| Grid {
            arch,
            state,
            values: vec![Vec::with_capacity(steps.len()); p],
        })
        .collect();
    for step in &steps {
        for (grid, column) in grids.iter_mut().zip(memory_of(step)) {
            for (row, v) in grid.values.iter_mut().zip(column) {
                row.push(v);
            }
        }
    }
    Ok(grids)
}

fn sorted(mut scores: Vec<NeuronScore>) -> Vec<NeuronScore> {
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.neuron.cmp(&b.neuron)));
    scores
}

/// Ranks neurons for long- and short-term behaviour, best first.
///
/// Long-term score: uncentred lag-1 autocorrelation
/// `Σ x_t x_{t+1} / Σ x_t²`, near 1 for a neuron that holds its value.
/// Short-term score: mean `|x_{t+1} - x_t|`, large for a neuron that flips.
pub fn rank_neurons(grid: &Grid) -> (Vec<NeuronScore>, Vec<NeuronScore>) {
    let mut long = Vec::with_capacity(grid.neurons());
    let mut short = Vec::with_capacity(grid.neurons());
    for (neuron, row) in grid.values.iter().enumerate() {
        let energy: f64 = row.iter().map(|v| v * v).sum();
        let lagged: f64 = row.windows(2).map(|w| w[0] * w[1]).sum();
        let moves: f64 = row.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        long.push(NeuronScore {
            neuron,
            score: if energy > 0.0 { lagged / energy } else { 0.0 },
        });
        short.push(NeuronScore {
            neuron,
            score: if row.len() > 1 { moves / (row.len() - 1) as f64 } else { 0.0 },
        });
    }
    (sorted(long), sorted(short))
}

/// Writes a grid as CSV under a one-line `# arch=… state=…` header.
pub fn write_grid(grid: &Grid, path: &Path) -> Result<(), HarnessError> {
    let mut text = format!(
        "# arch={} state={} neurons={} steps={}\n",
        grid.arch,
        grid.state,
        grid.neurons(),
        grid.steps()
    );
    for row in &grid.values {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        text += &cells.join(",");
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

/// Writes the memory grids of `input` and a ranked neuron list.
///
/// The first grid goes to `out`; further grids (NLSTM's inner state) go to
/// `<stem>.<state>.csv`. Rankings go to `<stem>.neurons.csv` with columns
/// `state,rank,long_term,long_score,short_term,short_score`.
pub fn export_heatmap(model: &Model, input: &SeqInput, out: &Path) -> Result<Vec<Grid>, HarnessError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let grids = memory_grids(model, input)?;
    let mut ranks = String::from("state,rank,long_term,long_score,short_term,short_score\n");
    for (k, grid) in grids.iter().enumerate() {
        let path = if k == 0 { out.to_path_buf() } else { sibling(out, grid.state) };
        write_grid(grid, &path)?;
        let (long, short) = rank_neurons(grid);
        for (rank, (l, s)) in long.iter().zip(&short).enumerate() {
            let _ = writeln!(ranks, "{},{rank},{},{},{},{}", grid.state, l.neuron, l.score, s.neuron, s.score);
        }
    }
    let path = sibling(out, "neurons");
    fs::write(&path, ranks).map_err(|e| HarnessError::io(&path, e))?;
    Ok(grids)
}

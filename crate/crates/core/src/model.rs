//! A recurrent cell with its input embedding and affine readout, plus the
//! input/target containers shared by the gradient code and the harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::{fill_uniform, init_params, Arch, CellError, CellParams};
use crate::numkit::{Matrix, Rng, Vector};
use crate::params::Parameters;

/// Affine map from the hidden state to `out` outputs: `y = h W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub w: Matrix,
    pub b: Vector,
}

impl Readout {
    pub fn zeros(p: usize, out: usize) -> Self {
        Readout {
            w: Matrix::zeros(p, out),
            b: Vector::zeros(out),
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.b.as_slice().to_vec();
        self.w.vecmat_acc(h, &mut y);
        y
    }
}

/// Cell, readout and optional embedding table (`vocab × m`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub cell: CellParams,
    pub readout: Readout,
    pub embedding: Option<Matrix>,
}

/// Shape of a model to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Cell input size `m` (embedding width when `vocab` is set).
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    /// Token vocabulary for an embedding table, if inputs are token ids.
    pub vocab: Option<usize>,
}

impl ModelSpec {
    /// Exact number of trainable scalars.
    pub fn param_count(&self) -> usize {
        crate::cells::count_params(self.arch, self.input, self.hidden, self.output)
            + self.vocab.map_or(0, |v| v * self.input)
    }
}

impl Model {
    /// Cell tensors from [`init_params`], readout from `U(-1/√p, 1/√p)`,
    /// embedding from `U(-1, 1)`, drawn in that order.
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<Model, CellError> {
        let cell = init_params(spec.arch, spec.input, spec.hidden, rng)?;
        if spec.output == 0 {
            return Err(CellError::Dimension("readout width must be positive".into()));
        }
        let mut readout = Readout::zeros(spec.hidden, spec.output);
        fill_uniform(&mut readout, 1.0 / (spec.hidden as f64).sqrt(), rng);
        let embedding = match spec.vocab {
            Some(0) => return Err(CellError::Dimension("vocabulary must be non-empty".into())),
            Some(v) => {
                let mut e = Matrix::zeros(v, spec.input);
                fill_uniform(&mut e, 1.0, rng);
                Some(e)
            }
            None => None,
        };
        Ok(Model {
            cell,
            readout,
            embedding,
        })
    }

    pub fn zeros(spec: ModelSpec) -> Model {
        Model {
            cell: CellParams::zeros(spec.arch, spec.input, spec.hidden),
            readout: Readout::zeros(spec.hidden, spec.output),
            embedding: spec.vocab.map(|v| Matrix::zeros(v, spec.input)),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            arch: self.arch(),
            input: self.input_dim(),
            hidden: self.hidden(),
            output: self.output_dim(),
            vocab: self.embedding.as_ref().map(Matrix::rows),
        }
    }

    pub fn arch(&self) -> Arch {
        self.cell.arch()
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn output_dim(&self) -> usize {
        self.readout.b.len()
    }

    pub fn is_well_formed(&self) -> bool {
        let p = self.hidden();
        self.cell.is_well_formed()
            && self.readout.w.is_well_formed()
            && (self.readout.w.rows(), self.readout.w.cols()) == (p, self.output_dim())
            && self
                .embedding
                .as_ref()
                .is_none_or(|e| e.is_well_formed() && e.cols() == self.input_dim())
    }
}

impl Parameters for Readout {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), self.b.as_slice()]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), self.b.as_mut_slice()]
    }
}

impl Parameters for Model {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.cell.tensors();
        t.extend(self.readout.tensors());
        if let Some(e) = &self.embedding {
            t.push(e.as_slice());
        }
        t
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.cell.tensors_mut();
        t.extend(self.readout.tensors_mut());
        if let Some(e) = &mut self.embedding {
            t.push(e.as_mut_slice());
        }
        t
    }
}

/// One input sequence: dense `T × m` rows, or token ids that are looked up
/// in the embedding table (or one-hot encoded when the model has none).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SeqInput {
    Dense(Vec<Vector>),
    Tokens(Vec<usize>),
}

impl SeqInput {
    pub fn len(&self) -> usize {
        match self {
            SeqInput::Dense(v) => v.len(),
            SeqInput::Tokens(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What a sequence is scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Regression target read from the final hidden state.
    Regression(Vec<f64>),
    /// Class label read from the final hidden state.
    Class(usize),
    /// One label per timestep.
    Sequence(Vec<usize>),
}

/// Training loss head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Ce,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Ce => "ce",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "ce" => Ok(LossKind::Ce),
            other => Err(format!("unknown loss `{other}` (expected mse or ce)")),
        }
    }
}

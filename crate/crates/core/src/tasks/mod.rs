//! Benchmark data: the adding problem, copy memory, pixel-by-pixel image
//! classification and text corpora for language modelling.

mod corpus;
mod idx;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SeqInput, Target};
use crate::numkit::{Rng, Vector};

pub use corpus::{batchify, load_text_corpus, CorpusSplit, Granularity, LmStream, LmWindow, Vocabulary, UNK};
pub use idx::{
    images_to_batch, load_idx_images, read_idx_images, read_idx_labels, synthetic_digits, write_idx_images,
    write_idx_labels, ImageSet, IMAGE_MAGIC, LABEL_MAGIC,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{what} must be at least {min}, got {got}")]
    TooSmall { what: &'static str, min: usize, got: usize },
    #[error("{path}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: truncated, expected {expected} bytes but found {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} at index {index} is not a digit")]
    BadLabel { path: PathBuf, index: usize, label: u8 },
    #[error("{0}: training text is empty")]
    EmptyCorpus(PathBuf),
    #[error("corpus of {len} tokens is too short for {batch} streams of window {bptt} (needs {needed})")]
    CorpusTooShort { len: usize, batch: usize, bptt: usize, needed: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl TaskError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        TaskError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Task family names used by configs and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Adding,
    Copy,
    Mnist,
    Char,
    Word,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [TaskKind::Adding, TaskKind::Copy, TaskKind::Mnist, TaskKind::Char, TaskKind::Word];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Adding => "adding",
            TaskKind::Copy => "copy",
            TaskKind::Mnist => "mnist",
            TaskKind::Char => "char",
            TaskKind::Word => "word",
        }
    }

    pub fn is_language_model(self) -> bool {
        matches!(self, TaskKind::Char | TaskKind::Word)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown task `{s}` (expected adding, copy, mnist, char or word)"))
    }
}

/// A batch of sequences with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub task: TaskKind,
    /// Sequence length of every input.
    pub len: usize,
    pub inputs: Vec<SeqInput>,
    pub targets: Vec<Target>,
}

impl TaskBatch {
    pub fn size(&self) -> usize {
        self.inputs.len()
    }

    /// Writes one row per timestep: `sequence,timestep,<inputs…>,target`.
    /// Regression and class targets sit on the final row of each sequence.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let width = match self.inputs.first() {
            Some(SeqInput::Dense(rows)) => rows.first().map_or(0, |r| r.len()),
            _ => 1,
        };
        let cols: Vec<String> = (0..width).map(|k| format!("x{k}")).collect();
        writeln!(out, "sequence,timestep,{},target", cols.join(","))?;
        for (s, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            for t in 0..x.len() {
                let xs = match x {
                    SeqInput::Dense(rows) => rows[t].iter().map(f64::to_string).collect::<Vec<_>>().join(","),
                    SeqInput::Tokens(ids) => ids[t].to_string(),
                };
                let last = t + 1 == x.len();
                let ys = match y {
                    Target::Regression(v) if last => v.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
                    Target::Class(c) if last => c.to_string(),
                    Target::Sequence(labels) => labels[t].to_string(),
                    _ => String::new(),
                };
                writeln!(out, "{s},{t},{xs},{ys}")?;
            }
        }
        Ok(())
    }
}

/// Adding problem: two input channels, values `U[0,1)` and a marker channel
/// with one 1 in each half of the sequence. The target is the sum of the
/// two marked values.
pub fn gen_adding(rng: &mut Rng, len: usize, batch: usize) -> Result<TaskBatch, TaskError> {
    if len < 2 {
        return Err(TaskError::TooSmall {
            what: "adding-problem length",
            min: 2,
            got: len,
        });
    }
    let half = len / 2;
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let values: Vec<f64> = (0..len).map(|_| rng.unit()).collect();
        let first = rng.below(half);
        let second = half + rng.below(len - half);
        let rows = values
            .iter()
            .enumerate()
            .map(|(t, &v)| Vector::from(vec![v, if t == first || t == second { 1.0 } else { 0.0 }]))
            .collect();
        inputs.push(SeqInput::Dense(rows));
        targets.push(Target::Regression(vec![values[first] + values[second]]));
    }
    Ok(TaskBatch {
        task: TaskKind::Adding,
        len,
        inputs,
        targets,
    })
}

/// The bundled public-domain character corpus (Genesis, King James
/// Version) as `(train, valid, test)`: chapters 1-44, 45-47 and 48-50.
pub fn genesis() -> (&'static str, &'static str, &'static str) {
    (
        include_str!("../../data/genesis/train.txt"),
        include_str!("../../data/genesis/valid.txt"),
        include_str!("../../data/genesis/test.txt"),
    )
}

/// Symbols of the copy task.
pub const COPY_BLANK: usize = 0;
pub const COPY_MARK: usize = 9;
pub const COPY_ALPHABET: usize = 10;
pub const COPY_DIGITS: usize = 10;

/// Copy memory: ten digits from `1..=8`, `len - 1` blanks, then the
/// delimiter and ten recall slots, all `9`. The target is blank up to the
/// recall slots, which must reproduce the ten digits. Total length `len + 20`.
pub fn gen_copy(rng: &mut Rng, len: usize, batch: usize) -> Result<TaskBatch, TaskError> {
    if len < 1 {
        return Err(TaskError::TooSmall {
            what: "copy-memory delay",
            min: 1,
            got: len,
        });
    }
    let total = len + 2 * COPY_DIGITS;
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let digits: Vec<usize> = (0..COPY_DIGITS).map(|_| 1 + rng.below(8)).collect();
        let mut x = digits.clone();
        x.resize(COPY_DIGITS + len - 1, COPY_BLANK);
        x.resize(total, COPY_MARK);
        let mut y = vec![COPY_BLANK; total - COPY_DIGITS];
        y.extend(&digits);
        inputs.push(SeqInput::Tokens(x));
        targets.push(Target::Sequence(y));
    }
    Ok(TaskBatch {
        task: TaskKind::Copy,
        len: total,
        inputs,
        targets,
    })
}

/// Indices where a copy input steps from a non-mark symbol onto the mark.
pub fn copy_delimiters(input: &[usize]) -> Vec<usize> {
    (1..input.len())
        .filter(|&t| input[t] == COPY_MARK && input[t - 1] != COPY_MARK)
        .collect()
}

//! Run configuration with per-task defaults and flat `key = value` files.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::Arch;
use crate::model::{LossKind, ModelSpec};
use crate::metrics::Metric;
use crate::optim::OptimizerKind;
use crate::tasks::{TaskKind, COPY_ALPHABET};

use super::HarnessError;

/// Everything that determines a run, given its data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub arch: Arch,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub iters: u64,
    pub batch: usize,
    /// Sequence length `T` of the adding and copy tasks.
    pub len: usize,
    /// Truncated-BPTT window for language models.
    pub bptt: usize,
    /// Token embedding width for language models; 0 means `hidden`.
    pub embed: usize,
    /// Iterations between evaluations; 0 means once per pass over the
    /// training stream (language models) or every 100 iterations.
    pub eval_every: u64,
    /// Sequences per synthetic evaluation set, images per image split, and
    /// windows per language-model split.
    pub eval_size: usize,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Record elapsed seconds in the curve file (otherwise 0, keeping the
    /// file byte-reproducible).
    pub wall_clock: bool,
}

struct Row {
    widths: [usize; 5],
    optimizer: OptimizerKind,
    lr: f64,
    clip: f64,
    size: usize,
}

fn row(task: TaskKind) -> Row {
    use OptimizerKind::*;
    match task {
        TaskKind::Adding => Row {
            widths: [308, 177, 153, 77, 85],
            optimizer: Adam,
            lr: 1e-3,
            clip: 0.5,
            size: 95_000,
        },
        TaskKind::Mnist => Row {
            widths: [384, 222, 192, 108, 97],
            optimizer: Rmsprop,
            lr: 1e-3,
            clip: 1.0,
            size: 152_000,
        },
        TaskKind::Copy => Row {
            widths: [1800, 1050, 900, 448, 500],
            optimizer: Rmsprop,
            lr: 5e-4,
            clip: 1.0,
            size: 3_300_000,
        },
        TaskKind::Word => Row {
            widths: [125, 119, 117, 100, 109],
            optimizer: Sgd,
            lr: 30.0,
            clip: 0.35,
            size: 1_300_000,
        },
        TaskKind::Char => Row {
            widths: [2900, 1680, 1050, 920, 1000],
            optimizer: Adam,
            lr: 1e-3,
            clip: 0.15,
            size: 17_100_000,
        },
    }
}

/// Reference hidden width for `arch` on `task`.
pub fn table_width(task: TaskKind, arch: Arch) -> usize {
    let i = Arch::ALL.iter().position(|&a| a == arch).expect("every arch is listed");
    row(task).widths[i]
}

/// Reference model size for `task`.
pub fn table_size(task: TaskKind) -> usize {
    row(task).size
}

impl TrainConfig {
    /// Reference settings for `task` and `arch`, including the per-arch
    /// learning-rate and clipping exceptions.
    pub fn defaults(task: TaskKind, arch: Arch) -> TrainConfig {
        let r = row(task);
        let (mut lr, mut clip) = (r.lr, r.clip);
        match (task, arch) {
            (TaskKind::Adding, Arch::Nlstm) => (lr, clip) = (0.01, 0.1),
            (TaskKind::Mnist, Arch::Nlstm) => clip = 0.25,
            (TaskKind::Mnist, Arch::Lstm) => lr = 1e-4,
            (TaskKind::Copy, Arch::Nlstm) => (lr, clip) = (1e-4, 0.25),
            _ => {}
        }
        TrainConfig {
            task,
            arch,
            hidden: table_width(task, arch),
            optimizer: r.optimizer,
            lr,
            clip,
            seed: 1,
            iters: 10_000,
            batch: if task == TaskKind::Word { 20 } else { 32 },
            len: match task {
                TaskKind::Adding => 200,
                TaskKind::Copy => 1000,
                _ => 0,
            },
            bptt: match task {
                TaskKind::Char => 150,
                TaskKind::Word => 35,
                _ => 0,
            },
            embed: 0,
            eval_every: 0,
            eval_size: 256,
            data_dir: None,
            out_dir: PathBuf::from("runs"),
            wall_clock: false,
        }
    }

    pub fn embed_width(&self) -> usize {
        if self.embed == 0 {
            self.hidden
        } else {
            self.embed
        }
    }

    /// Model shape for this task; `vocab` is the corpus vocabulary size for
    /// language models.
    pub fn model_spec(&self, vocab: Option<usize>) -> ModelSpec {
        let (input, output, vocab) = match self.task {
            TaskKind::Adding => (2, 1, None),
            TaskKind::Copy => (COPY_ALPHABET, COPY_ALPHABET, None),
            TaskKind::Mnist => (1, 10, None),
            TaskKind::Char | TaskKind::Word => {
                let v = vocab.unwrap_or_else(|| default_vocab(self.task));
                (self.embed_width(), v, Some(v))
            }
        };
        ModelSpec {
            arch: self.arch,
            input,
            hidden: self.hidden,
            output,
            vocab,
        }
    }

    pub fn loss(&self) -> LossKind {
        match self.task {
            TaskKind::Adding => LossKind::Mse,
            _ => LossKind::Ce,
        }
    }

    /// Headline metric of the task.
    pub fn metric(&self) -> Metric {
        match self.task {
            TaskKind::Adding => Metric::Mse,
            TaskKind::Copy => Metric::Ce,
            TaskKind::Mnist => Metric::Acc,
            TaskKind::Char => Metric::Bpc,
            TaskKind::Word => Metric::Ppl,
        }
    }

    pub fn eval_interval(&self) -> u64 {
        if self.eval_every > 0 {
            self.eval_every
        } else {
            100
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.hidden == 0 || self.batch == 0 || self.eval_size == 0 {
            return bad("hidden, batch and eval_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return bad(format!("clip norm must be positive, got {}", self.clip));
        }
        match self.task {
            TaskKind::Adding if self.len < 2 => bad(format!("adding task needs len >= 2, got {}", self.len)),
            TaskKind::Copy if self.len < 1 => bad("copy task needs len >= 1".into()),
            TaskKind::Char | TaskKind::Word if self.bptt == 0 => bad("language models need bptt >= 1".into()),
            _ => Ok(()),
        }
    }

    /// Applies `key = value` settings in order. `task` and `arch` first
    /// select the reference defaults; every other key then overrides them.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<TrainConfig, HarnessError> {
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let task: TaskKind = parse_value("task", last("task").unwrap_or("adding"))?;
        let arch: Arch = parse_value("arch", last("arch").unwrap_or("mcrm"))?;
        let mut c = TrainConfig::defaults(task, arch);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "task" | "arch" | "seeds" => {}
            "hidden" => self.hidden = parse_value(&key, value)?,
            "optimizer" => self.optimizer = parse_value(&key, value)?,
            "lr" => self.lr = parse_value(&key, value)?,
            "clip" => self.clip = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "iters" => self.iters = parse_value(&key, value)?,
            "batch" => self.batch = parse_value(&key, value)?,
            "len" => self.len = parse_value(&key, value)?,
            "bptt" => self.bptt = parse_value(&key, value)?,
            "embed" => self.embed = parse_value(&key, value)?,
            "eval_every" => self.eval_every = parse_value(&key, value)?,
            "eval_size" => self.eval_size = parse_value(&key, value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value.trim())),
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "wall_clock" => self.wall_clock = parse_value(&key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

/// Typical vocabulary sizes used when a corpus is not at hand (parameter
/// counting): 50 characters, 10 000 words.
pub fn default_vocab(task: TaskKind) -> usize {
    match task {
        TaskKind::Word => 10_000,
        _ => 50,
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| HarnessError::Config(format!("`{key}`: {e}")))
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_owned()));
    }
    Ok(out)
}

/// Warns when an overridden width moves the model more than 5% away from the
/// task's reference size.
pub fn parity_warning(config: &TrainConfig, vocab: Option<usize>) -> Option<String> {
    if config.hidden == table_width(config.task, config.arch) {
        return None;
    }
    let count = config.model_spec(vocab).param_count();
    let target = table_size(config.task);
    let off = (count as f64 - target as f64) / target as f64;
    (off.abs() > 0.05).then(|| {
        format!(
            "{} with hidden={} has {count} parameters, {:+.1}% from the reference {target} for {}",
            config.arch,
            config.hidden,
            100.0 * off,
            config.task
        )
    })
}

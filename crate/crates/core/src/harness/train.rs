//! The training loop, evaluation and learning-curve output.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::cells::CellState;
use crate::grad::{backprop_from_states, batch_loss, run_sequence, GradError};
use crate::metrics::{self, EvalReport, Metric, Split};
use crate::model::{LossKind, Model, SeqInput, Target};
use crate::numkit::{Rng, RngState};
use crate::optim::{clip_global_norm, OptState};
use crate::params::Parameters;
use crate::tasks::{
    batchify, gen_adding, gen_copy, genesis, images_to_batch, load_idx_images, load_text_corpus, CorpusSplit,
    Granularity, ImageSet, LmStream, TaskKind,
};

use super::checkpoint::{save_checkpoint, Checkpoint, LmCursor, LossMeter, CHECKPOINT_VERSION};
use super::config::parity_warning;
use super::{load_checkpoint, HarnessError, TrainConfig};

pub const CURVE_HEADER: &str = "iteration,split,metric,value,seconds";

/// One learning-curve sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: u64,
    pub split: Split,
    pub metric: Metric,
    pub value: f64,
    pub seconds: f64,
}

impl CurvePoint {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.split, self.metric, self.value, self.seconds
        )
    }
}

enum Data {
    Synthetic,
    Images { train: ImageSet, valid: ImageSet, test: ImageSet },
    Corpus { corpus: CorpusSplit, stream: LmStream },
}

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn split_images(set: ImageSet, at: usize) -> (ImageSet, ImageSet) {
    let mut head = set;
    let tail = ImageSet {
        rows: head.rows,
        cols: head.cols,
        pixels: head.pixels.split_off(at),
        labels: head.labels.split_off(at),
    };
    (head, tail)
}

fn load_data(config: &TrainConfig) -> Result<Data, HarnessError> {
    match config.task {
        TaskKind::Adding | TaskKind::Copy => Ok(Data::Synthetic),
        TaskKind::Mnist => {
            let dir = config.data_dir.as_ref().ok_or_else(|| {
                HarnessError::Data("the image task needs a data directory with IDX files (see gen-data)".into())
            })?;
            let [ti, tl, vi, vl] = MNIST_FILES.map(|f| dir.join(f));
            let full = load_idx_images(&ti, &tl)?;
            let test = load_idx_images(&vi, &vl)?;
            if full.len() < 2 || test.is_empty() {
                return Err(HarnessError::Data("image files hold too few examples".into()));
            }
            let cut = full.len() - (full.len() / 12).max(1);
            let (train, valid) = split_images(full, cut);
            Ok(Data::Images { train, valid, test })
        }
        TaskKind::Char | TaskKind::Word => {
            let granularity = if config.task == TaskKind::Char {
                Granularity::Char
            } else {
                Granularity::Word
            };
            let corpus = match &config.data_dir {
                Some(dir) => load_text_corpus(&dir.join("train.txt"), &dir.join("valid.txt"), &dir.join("test.txt"), granularity)?,
                None => {
                    let (tr, va, te) = genesis();
                    CorpusSplit::from_texts(granularity, tr, va, te).map_err(HarnessError::Data)?
                }
            };
            let stream = batchify(&corpus.train, config.batch, config.bptt)?;
            Ok(Data::Corpus { corpus, stream })
        }
    }
}

/// Salt mixed into the seed of each synthetic evaluation set.
fn split_salt(split: Split) -> u64 {
    match split {
        Split::Train => 0x7472_6169_6e00_0000,
        Split::Valid => 0x7661_6c69_6400_0000,
        Split::Test => 0x7465_7374_0000_0000,
    }
}

/// A training run in progress.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub opt: OptState,
    pub iteration: u64,
    pub best: Option<f64>,
    rng: Rng,
    meter: LossMeter,
    lm: Option<LmCursor>,
    data: Data,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer, HarnessError> {
        config.validate()?;
        let data = load_data(&config)?;
        let vocab = match &data {
            Data::Corpus { corpus, .. } => Some(corpus.vocab.len()),
            _ => None,
        };
        let mut rng = Rng::seed_from_u64(config.seed);
        let model = Model::init(config.model_spec(vocab), &mut rng)?;
        let lm = vocab.map(|_| LmCursor {
            window: 0,
            states: vec![CellState::zeros(config.arch, config.hidden); config.batch],
        });
        Ok(Trainer {
            config,
            model,
            opt: OptState::new(),
            iteration: 0,
            best: None,
            rng,
            meter: LossMeter::default(),
            lm,
            data,
            started: Instant::now(),
        })
    }

    /// Restores a run; `data_dir` replaces the stored data location.
    pub fn from_checkpoint(ck: Checkpoint, data_dir: Option<PathBuf>) -> Result<Trainer, HarnessError> {
        let mut config = ck.config;
        if data_dir.is_some() {
            config.data_dir = data_dir;
        }
        let data = load_data(&config)?;
        if let Data::Corpus { corpus, .. } = &data {
            if ck.vocab.as_ref().map(|v| &v.symbols) != Some(&corpus.vocab.symbols) {
                return Err(HarnessError::Data("corpus vocabulary differs from the checkpoint's".into()));
            }
        }
        let rng = Rng::from_state(&ck.rng).ok_or_else(|| HarnessError::Checkpoint {
            path: PathBuf::new(),
            message: "invalid random-generator state".into(),
        })?;
        Ok(Trainer {
            config,
            model: ck.model,
            opt: ck.opt,
            iteration: ck.iteration,
            best: ck.best,
            rng,
            meter: ck.meter,
            lm: ck.lm,
            data,
            started: Instant::now(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_with_rng(self.rng.state())
    }

    fn checkpoint_with_rng(&self, rng: RngState) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            model: self.model.clone(),
            opt: self.opt.clone(),
            rng,
            iteration: self.iteration,
            best: self.best,
            meter: self.meter,
            lm: self.lm.clone(),
            vocab: match &self.data {
                Data::Corpus { corpus, .. } => Some(corpus.vocab.clone()),
                _ => None,
            },
        }
    }

    /// Iterations between curve points.
    pub fn eval_interval(&self) -> u64 {
        match (&self.data, self.config.eval_every) {
            (Data::Corpus { stream, .. }, 0) => stream.window_count() as u64,
            _ => self.config.eval_interval(),
        }
    }

    fn next_batch(&mut self) -> Result<(Vec<SeqInput>, Vec<Target>, Vec<CellState>), HarnessError> {
        let zeros = |n| vec![CellState::zeros(self.config.arch, self.config.hidden); n];
        let (inputs, targets) = match &self.data {
            Data::Synthetic => {
                let b = match self.config.task {
                    TaskKind::Adding => gen_adding(&mut self.rng, self.config.len, self.config.batch)?,
                    _ => gen_copy(&mut self.rng, self.config.len, self.config.batch)?,
                };
                (b.inputs, b.targets)
            }
            Data::Images { train, .. } => {
                let idx: Vec<usize> = (0..self.config.batch).map(|_| self.rng.below(train.len())).collect();
                let b = images_to_batch(train, &idx);
                (b.inputs, b.targets)
            }
            Data::Corpus { stream, .. } => {
                let cursor = self.lm.as_ref().expect("language-model runs keep a cursor");
                let start = cursor.window * stream.bptt;
                let (x, y) = stream.window(start).to_batch();
                return Ok((x, y, cursor.states.clone()));
            }
        };
        let n = inputs.len();
        Ok((inputs, targets, zeros(n)))
    }

    fn diverge(&self, rng: RngState, reason: String) -> HarnessError {
        let path = self.config.out_dir.join("diverged.json");
        if let Err(e) = save_checkpoint(&self.checkpoint_with_rng(rng), &path) {
            return e;
        }
        HarnessError::Divergence {
            iteration: self.iteration + 1,
            reason,
            checkpoint: path,
        }
    }

    /// One optimisation step: batch, BPTT, mean over the batch, clipping,
    /// update. Returns the batch-mean loss.
    pub fn step(&mut self) -> Result<f64, HarnessError> {
        let rng_before = self.rng.state();
        let (inputs, targets, inits) = self.next_batch()?;
        let loss = self.config.loss();
        let out = match backprop_from_states(&self.model, &inputs, &targets, loss, &inits) {
            Ok(out) => out,
            Err(e @ GradError::NonFinite { .. }) => return Err(self.diverge(rng_before, e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let b = inputs.len() as f64;
        let mean = out.loss_sum / b;
        let mut grads = out.grads;
        grads.scale(1.0 / b);
        if !mean.is_finite() || !grads.all_finite() {
            return Err(self.diverge(rng_before, "non-finite loss or gradient".into()));
        }
        clip_global_norm(&mut grads, self.config.clip);
        self.config
            .optimizer
            .step(&mut self.model, &grads, &mut self.opt, self.config.lr);

        if let (Some(cursor), Data::Corpus { stream, .. }) = (self.lm.as_mut(), &self.data) {
            cursor.window += 1;
            if cursor.window >= stream.window_count() {
                cursor.window = 0;
                cursor.states = vec![CellState::zeros(self.config.arch, self.config.hidden); self.config.batch];
            } else {
                cursor.states = out.final_states;
            }
        }
        self.iteration += 1;
        self.meter.add(mean);
        Ok(mean)
    }

    fn seconds(&self) -> f64 {
        if self.config.wall_clock {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Training-loss summary in the task's units and the validation metric.
    fn curve_points(&mut self) -> Result<Vec<CurvePoint>, HarnessError> {
        let mut points = Vec::new();
        if let Some(mean) = self.meter.mean() {
            let (metric, value) = match self.config.task {
                TaskKind::Char => (Metric::Bpc, metrics::bpc(mean)),
                TaskKind::Word => (Metric::Ppl, metrics::ppl(mean)),
                TaskKind::Adding => (Metric::Mse, mean),
                _ => (Metric::Ce, mean),
            };
            points.push(CurvePoint {
                iteration: self.iteration,
                split: Split::Train,
                metric,
                value,
                seconds: self.seconds(),
            });
        }
        self.meter = LossMeter::default();
        let valid = self.evaluate(Split::Valid)?;
        let metric = self.config.metric();
        if self.best.is_none_or(|b| metric.better(valid.value, b)) {
            self.best = Some(valid.value);
        }
        points.push(CurvePoint {
            iteration: self.iteration,
            split: Split::Valid,
            metric,
            value: valid.value,
            seconds: self.seconds(),
        });
        Ok(points)
    }

    /// Trains until `until` iterations, handing each curve point to `sink`.
    pub fn run<F>(&mut self, until: u64, mut sink: F) -> Result<(), HarnessError>
    where
        F: FnMut(&CurvePoint) -> Result<(), HarnessError>,
    {
        let interval = self.eval_interval().max(1);
        while self.iteration < until {
            self.step()?;
            if self.iteration.is_multiple_of(interval) {
                for p in self.curve_points()? {
                    sink(&p)?;
                }
            }
        }
        Ok(())
    }

    /// Scores the current parameters on `split`; never changes the model.
    ///
    /// Synthetic tasks draw a fresh set from a seed fixed per split, so
    /// repeated calls see the same sequences. Each evaluation sequence starts
    /// from a zero state, except for language models, whose state carries
    /// across consecutive windows of the split.
    pub fn evaluate(&self, split: Split) -> Result<EvalReport, HarnessError> {
        let c = &self.config;
        let metric = c.metric();
        let (value, samples) = match &self.data {
            Data::Synthetic => {
                let mut rng = Rng::seed_from_u64(c.seed ^ split_salt(split));
                let b = match c.task {
                    TaskKind::Adding => gen_adding(&mut rng, c.len, c.eval_size)?,
                    _ => gen_copy(&mut rng, c.len, c.eval_size)?,
                };
                let total = batch_loss(&self.model, &b.inputs, &b.targets, c.loss())?;
                (total / b.size() as f64, b.size())
            }
            Data::Images { train, valid, test } => {
                let set = match split {
                    Split::Train => train,
                    Split::Valid => valid,
                    Split::Test => test,
                };
                let n = set.len().min(c.eval_size);
                let idx: Vec<usize> = (0..n).collect();
                let b = images_to_batch(set, &idx);
                let zero = CellState::zeros(c.arch, c.hidden);
                let mut logits = Vec::with_capacity(n);
                let mut labels = Vec::with_capacity(n);
                for (x, y) in b.inputs.iter().zip(&b.targets) {
                    let (_, tape) = run_sequence(&self.model, x, y, LossKind::Ce, &zero)?;
                    logits.push(tape.head[0].output.clone());
                    if let Target::Class(k) = y {
                        labels.push(*k);
                    }
                }
                let acc = metrics::accuracy(&logits, &labels).map_err(|e| HarnessError::Data(e.to_string()))?;
                (acc, n)
            }
            Data::Corpus { corpus, .. } => {
                let tokens = match split {
                    Split::Train => &corpus.train,
                    Split::Valid => &corpus.valid,
                    Split::Test => &corpus.test,
                };
                let cap = c.eval_size * c.bptt + 1;
                let tokens = &tokens[..tokens.len().min(cap)];
                let stream = batchify(tokens, 1, c.bptt)?;
                let mut state = CellState::zeros(c.arch, c.hidden);
                let (mut sum, mut count) = (0.0, 0usize);
                for w in stream.windows() {
                    let (x, y) = w.to_batch();
                    let (_, tape) = run_sequence(&self.model, &x[0], &y[0], LossKind::Ce, &state)?;
                    sum += tape.head.iter().map(|h| h.loss).sum::<f64>();
                    count += tape.head.len();
                    state = tape.final_state(&state);
                }
                let ce = sum / count as f64;
                let value = if c.task == TaskKind::Char { metrics::bpc(ce) } else { metrics::ppl(ce) };
                (value, count)
            }
        };
        if !value.is_finite() {
            return Err(HarnessError::Data(format!("{split} {metric} is not finite")));
        }
        Ok(EvalReport {
            metric,
            value,
            samples,
            split,
        })
    }
}

/// Outcome of a finished run.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub iteration: u64,
    pub param_count: usize,
    pub valid: EvalReport,
    pub test: EvalReport,
    pub best: Option<f64>,
    pub curves: PathBuf,
    pub checkpoint: PathBuf,
    pub warning: Option<String>,
}

fn curve_sink(path: &Path, fresh: bool) -> Result<impl FnMut(&CurvePoint) -> Result<(), HarnessError>, HarnessError> {
    let exists = path.exists() && !fresh;
    let mut file = OpenOptions::new()
        .create(true)
        .append(exists)
        .write(true)
        .truncate(!exists)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    if !exists || file.metadata().map(|m| m.len() == 0).unwrap_or(true) {
        writeln!(file, "{CURVE_HEADER}").map_err(|e| HarnessError::io(path, e))?;
    }
    let path = path.to_path_buf();
    Ok(move |p: &CurvePoint| writeln!(file, "{}", p.csv_line()).map_err(|e| HarnessError::io(&path, e)))
}

fn finish(mut trainer: Trainer, fresh: bool) -> Result<RunSummary, HarnessError> {
    let out = trainer.config.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
    let curves = out.join("curves.csv");
    let vocab = trainer.model.embedding.as_ref().map(|e| e.rows());
    let warning = parity_warning(&trainer.config, vocab);
    let until = trainer.config.iters;
    trainer.run(until, curve_sink(&curves, fresh)?)?;
    let checkpoint = out.join("checkpoint.json");
    save_checkpoint(&trainer.checkpoint(), &checkpoint)?;
    Ok(RunSummary {
        seed: trainer.config.seed,
        iteration: trainer.iteration,
        param_count: trainer.model.param_count(),
        valid: trainer.evaluate(Split::Valid)?,
        test: trainer.evaluate(Split::Test)?,
        best: trainer.best,
        curves,
        checkpoint,
        warning,
    })
}

/// Trains from scratch; writes `curves.csv` and `checkpoint.json` into the
/// output directory.
pub fn run_training(config: TrainConfig) -> Result<RunSummary, HarnessError> {
    finish(Trainer::new(config)?, true)
}

/// Continues the run stored at `path` up to `iters` total iterations,
/// appending to its curve file.
pub fn resume_training(path: &Path, iters: Option<u64>, data_dir: Option<PathBuf>) -> Result<RunSummary, HarnessError> {
    let ck = load_checkpoint(path)?;
    let mut trainer = Trainer::from_checkpoint(ck, data_dir)?;
    if let Some(n) = iters {
        trainer.config.iters = n;
    }
    finish(trainer, false)
}

/// Scores a checkpoint on one split.
pub fn evaluate(ck: &Checkpoint, split: Split) -> Result<EvalReport, HarnessError> {
    Trainer::from_checkpoint(ck.clone(), None)?.evaluate(split)
}

pub fn evaluate_checkpoint(path: &Path, split: Split, data_dir: Option<PathBuf>) -> Result<EvalReport, HarnessError> {
    Trainer::from_checkpoint(load_checkpoint(path)?, data_dir)?.evaluate(split)
}

/// Per-seed results plus their mean.
#[derive(Clone, Debug, Serialize)]
pub struct SeedSummary {
    pub runs: Vec<RunSummary>,
    pub mean_valid: f64,
    pub mean_test: f64,
}

/// Runs one replica per seed under `out_dir/seed-<n>` and writes
/// `out_dir/summary.csv`.
pub fn run_seeds(config: TrainConfig, seeds: &[u64]) -> Result<SeedSummary, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("no seeds given".into()));
    }
    let base = config.out_dir.clone();
    let mut runs = Vec::new();
    for &seed in seeds {
        let mut c = config.clone();
        c.seed = seed;
        c.out_dir = base.join(format!("seed-{seed}"));
        runs.push(run_training(c)?);
    }
    let n = runs.len() as f64;
    let mean_valid = runs.iter().map(|r| r.valid.value).sum::<f64>() / n;
    let mean_test = runs.iter().map(|r| r.test.value).sum::<f64>() / n;
    let metric = config.metric();
    let mut text = String::from("seed,split,metric,value\n");
    for r in &runs {
        text += &format!("{},valid,{metric},{}\n{},test,{metric},{}\n", r.seed, r.valid.value, r.seed, r.test.value);
    }
    text += &format!("mean,valid,{metric},{mean_valid}\nmean,test,{metric},{mean_test}\n");
    let path = base.join("summary.csv");
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(SeedSummary {
        runs,
        mean_valid,
        mean_test,
    })
}

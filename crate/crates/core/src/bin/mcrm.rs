use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcrm::cells::{count_params, Arch};
use mcrm::harness::{
    evaluate_checkpoint, export_heatmap, load_checkpoint, parse_key_values, rank_neurons, resume_training, run_seeds,
    run_training, table_size, table_width, HarnessError, RunSummary, TrainConfig,
};
use mcrm::metrics::Split;
use mcrm::model::SeqInput;
use mcrm::numkit::{Rng, Vector};
use mcrm::tasks::{gen_adding, gen_copy, genesis, synthetic_digits, write_idx_images, write_idx_labels, TaskKind};

#[derive(Parser)]
#[command(name = "mcrm", version, about = "Nested LSTM-GRU recurrent cell lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes curves.csv and checkpoint.json to --out-dir.
    Train(TrainArgs),
    /// Score a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "valid")]
        split: Split,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Export memory-state heat maps of a checkpoint.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Text to feed a language model.
        #[arg(long)]
        text: Option<String>,
        /// Comma-separated token ids (categorical tasks) or values (pixels).
        #[arg(long)]
        seq: Option<String>,
        /// Seed for a generated input when neither --text nor --seq is given.
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count trainable parameters.
    CountParams {
        #[arg(long, default_value = "adding")]
        task: TaskKind,
        /// One architecture; all five when omitted.
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Vocabulary size for language-model tasks.
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        embed: Option<usize>,
    },
    /// Write task data: CSV batches (adding, copy), IDX files (mnist) or
    /// the bundled corpus (char).
    GenData {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 50)]
        len: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV file for adding/copy, directory for mnist/char.
        ///
        /// For mnist, --batch is the number of training images; the test
        /// file gets a sixth as many.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint (up to --iters total iterations).
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    clip: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated seeds, run one after another.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    bptt: Option<String>,
    /// Sequence length of the adding and copy tasks.
    #[arg(long)]
    len: Option<String>,
    #[arg(long)]
    embed: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    eval_size: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Record wall-clock seconds in curves.csv.
    #[arg(long)]
    wall_clock: bool,
}

impl TrainArgs {
    fn pairs(&self) -> Result<Vec<(String, String)>, HarnessError> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                parse_key_values(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("task", &self.task),
            ("arch", &self.arch),
            ("hidden", &self.hidden),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("clip", &self.clip),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("iters", &self.iters),
            ("batch", &self.batch),
            ("bptt", &self.bptt),
            ("len", &self.len),
            ("embed", &self.embed),
            ("eval_every", &self.eval_every),
            ("eval_size", &self.eval_size),
            ("data_dir", &self.data_dir),
            ("out_dir", &self.out_dir),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_owned(), v.clone()));
            }
        }
        if self.wall_clock {
            pairs.push(("wall_clock".into(), "true".into()));
        }
        Ok(pairs)
    }
}

fn print_summary(r: &RunSummary) {
    println!(
        "seed {}: {} iterations, {} parameters, {}, {}",
        r.seed, r.iteration, r.param_count, r.valid, r.test
    );
    println!("curves: {}", r.curves.display());
    println!("checkpoint: {}", r.checkpoint.display());
}

fn train(args: TrainArgs) -> Result<(), HarnessError> {
    if let Some(path) = &args.resume {
        let iters = args
            .iters
            .as_deref()
            .map(|v| v.parse().map_err(|e| HarnessError::Config(format!("`iters`: {e}"))))
            .transpose()?;
        let data_dir = args.data_dir.as_ref().map(PathBuf::from);
        print_summary(&resume_training(path, iters, data_dir)?);
        return Ok(());
    }
    let pairs = args.pairs()?;
    let config = TrainConfig::from_pairs(&pairs)?;
    let seeds = pairs.iter().rev().find(|(k, _)| k == "seeds").map(|(_, v)| v.clone());
    match seeds {
        Some(list) => {
            let seeds = list
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(format!("`seeds`: {e}")))?;
            let summary = run_seeds(config, &seeds)?;
            for r in &summary.runs {
                print_summary(r);
            }
            println!("mean valid {} mean test {}", summary.mean_valid, summary.mean_test);
        }
        None => {
            let r = run_training(config)?;
            if let Some(w) = &r.warning {
                eprintln!("warning: {w}");
            }
            print_summary(&r);
        }
    }
    Ok(())
}

fn heatmap_input(
    ck: &mcrm::harness::Checkpoint,
    text: Option<String>,
    seq: Option<String>,
    sample_seed: u64,
) -> Result<SeqInput, HarnessError> {
    let task = ck.config.task;
    if let Some(text) = text {
        let vocab = ck
            .vocab
            .as_ref()
            .ok_or_else(|| HarnessError::Config("--text needs a language-model checkpoint".into()))?;
        return vocab.encode(&text).map(SeqInput::Tokens).map_err(HarnessError::Data);
    }
    if let Some(seq) = seq {
        let parts = seq.split(',').map(str::trim);
        return if task == TaskKind::Mnist {
            let values = parts
                .map(|v| v.parse::<f64>().map(|v| Vector::from(vec![v])))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(format!("--seq: {e}")))?;
            Ok(SeqInput::Dense(values))
        } else {
            let ids = parts
                .map(str::parse::<usize>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(format!("--seq: {e}")))?;
            Ok(SeqInput::Tokens(ids))
        };
    }
    let mut rng = Rng::seed_from_u64(sample_seed);
    let batch = match task {
        TaskKind::Adding => gen_adding(&mut rng, ck.config.len, 1)?,
        TaskKind::Copy => gen_copy(&mut rng, ck.config.len, 1)?,
        _ => return Err(HarnessError::Config("give --text or --seq for this task".into())),
    };
    Ok(batch.inputs.into_iter().next().expect("one sequence"))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Eval {
            checkpoint,
            split,
            data_dir,
        } => {
            println!("{}", evaluate_checkpoint(&checkpoint, split, data_dir)?);
            Ok(())
        }
        Command::Heatmap {
            checkpoint,
            text,
            seq,
            sample_seed,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let input = heatmap_input(&ck, text, seq, sample_seed)?;
            let grids = export_heatmap(&ck.model, &input, &out)?;
            for g in &grids {
                let (long, short) = rank_neurons(g);
                let top = |v: &[mcrm::harness::NeuronScore]| {
                    v.iter().take(5).map(|s| s.neuron.to_string()).collect::<Vec<_>>().join(" ")
                };
                println!(
                    "{} {}: {}x{} grid; long-term neurons {}; short-term neurons {}",
                    g.arch,
                    g.state,
                    g.neurons(),
                    g.steps(),
                    top(&long),
                    top(&short)
                );
            }
            Ok(())
        }
        Command::CountParams {
            task,
            arch,
            hidden,
            vocab,
            embed,
        } => {
            let archs = arch.map_or(Arch::ALL.to_vec(), |a| vec![a]);
            let target = table_size(task);
            println!("arch,hidden,params,reference,deviation_pct");
            for a in archs {
                let mut c = TrainConfig::defaults(task, a);
                c.hidden = hidden.unwrap_or_else(|| table_width(task, a));
                if let Some(e) = embed {
                    c.embed = e;
                }
                let spec = c.model_spec(vocab);
                let n = if spec.vocab.is_some() {
                    spec.param_count()
                } else {
                    count_params(a, spec.input, spec.hidden, spec.output)
                };
                let dev = 100.0 * (n as f64 - target as f64) / target as f64;
                println!("{a},{},{n},{target},{dev:.2}", c.hidden);
            }
            Ok(())
        }
        Command::GenData {
            task,
            len,
            batch,
            seed,
            out,
        } => {
            let mut rng = Rng::seed_from_u64(seed);
            match task {
                TaskKind::Adding | TaskKind::Copy => {
                    let b = if task == TaskKind::Adding {
                        gen_adding(&mut rng, len, batch)?
                    } else {
                        gen_copy(&mut rng, len, batch)?
                    };
                    let file = fs::File::create(&out).map_err(|e| HarnessError::Data(format!("{}: {e}", out.display())))?;
                    b.write_csv(std::io::BufWriter::new(file))
                        .map_err(|e| HarnessError::Data(format!("{}: {e}", out.display())))?;
                }
                TaskKind::Mnist => {
                    fs::create_dir_all(&out).map_err(|e| HarnessError::Data(e.to_string()))?;
                    for (prefix, n) in [("train", batch.max(2)), ("t10k", (batch / 6).max(1))] {
                        let (images, labels) = synthetic_digits(&mut rng, n, 28);
                        write_idx_images(&out.join(format!("{prefix}-images-idx3-ubyte")), 28, 28, &images)?;
                        write_idx_labels(&out.join(format!("{prefix}-labels-idx1-ubyte")), &labels)?;
                    }
                }
                TaskKind::Char | TaskKind::Word => {
                    fs::create_dir_all(&out).map_err(|e| HarnessError::Data(e.to_string()))?;
                    let (tr, va, te) = genesis();
                    for (name, text) in [("train.txt", tr), ("valid.txt", va), ("test.txt", te)] {
                        fs::write(out.join(name), text).map_err(|e| HarnessError::Data(e.to_string()))?;
                    }
                }
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Character language models on the bundled corpus, one per cell type, at
//! roughly equal parameter counts.
//!
//!     cargo run --release --example char_language_model -- [iterations]

use mcrm::cells::{width_for_budget, Arch};
use mcrm::harness::{TrainConfig, Trainer};
use mcrm::metrics::Split;
use mcrm::optim::OptimizerKind;
use mcrm::params::Parameters;
use mcrm::tasks::{genesis, CorpusSplit, Granularity, TaskKind};

fn main() {
    let iters: u64 = std::env::args().nth(1).map_or(200, |a| a.parse().expect("iteration count"));
    let (tr, va, te) = genesis();
    let corpus = CorpusSplit::from_texts(Granularity::Char, tr, va, te).unwrap();
    let v = corpus.vocab.len();
    println!("{} training characters, vocabulary {v}", corpus.train.len());

    for arch in [Arch::Rnn, Arch::Gru, Arch::Lstm, Arch::Mcrm] {
        let mut c = TrainConfig::defaults(TaskKind::Char, arch);
        c.embed = 16;
        c.hidden = width_for_budget(arch, 16, v, v * 16, 50_000);
        c.optimizer = OptimizerKind::Adam;
        c.lr = 2e-3;
        c.clip = 1.0;
        c.batch = 16;
        c.bptt = 50;
        c.eval_size = 1000;
        c.out_dir = std::env::temp_dir().join(format!("mcrm-char-{arch}"));
        let mut t = Trainer::new(c).unwrap();
        t.run(iters, |_| Ok(())).unwrap();
        println!(
            "{:>5} p={:<4} {:>6} params  {}",
            arch.name(),
            t.config.hidden,
            t.model.param_count(),
            t.evaluate(Split::Valid).unwrap()
        );
    }
}

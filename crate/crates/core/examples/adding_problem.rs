//! MCRM on the adding problem with the reference optimiser settings.
//!
//!     cargo run --release --example adding_problem -- [iterations] [length]

use mcrm::cells::Arch;
use mcrm::harness::{TrainConfig, Trainer};
use mcrm::metrics::Split;
use mcrm::tasks::TaskKind;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let iters = args.next().unwrap_or(2000);
    let len = args.next().unwrap_or(50) as usize;

    let mut c = TrainConfig::defaults(TaskKind::Adding, Arch::Mcrm);
    c.hidden = 32;
    c.len = len;
    c.iters = iters;
    c.eval_every = 250;
    c.out_dir = std::env::temp_dir().join("mcrm-adding");
    let mut t = Trainer::new(c).unwrap();
    t.run(iters, |p| {
        println!("{:>6} {} {} {:.6}", p.iteration, p.split, p.metric, p.value);
        Ok(())
    })
    .unwrap();
    // Predicting 1 for every sequence scores 1/6.
    println!("test: {} (constant-prediction baseline 0.1667)", t.evaluate(Split::Test).unwrap());
}

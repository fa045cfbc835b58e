//! MCRM on the copy-memory task with RMSprop.
//!
//!     cargo run --release --example copy_memory -- [iterations] [delay]

use mcrm::cells::Arch;
use mcrm::harness::{TrainConfig, Trainer};
use mcrm::metrics::Split;
use mcrm::optim::OptimizerKind;
use mcrm::tasks::TaskKind;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let iters = args.next().unwrap_or(1000);
    let len = args.next().unwrap_or(50) as usize;

    let mut c = TrainConfig::defaults(TaskKind::Copy, Arch::Mcrm);
    c.hidden = 64;
    c.len = len;
    c.optimizer = OptimizerKind::Rmsprop;
    c.lr = 5e-4;
    c.clip = 1.0;
    c.iters = iters;
    c.eval_every = 250;
    c.out_dir = std::env::temp_dir().join("mcrm-copy");
    let mut t = Trainer::new(c).unwrap();
    t.run(iters, |p| {
        println!("{:>6} {} {} {:.6}", p.iteration, p.split, p.metric, p.value);
        Ok(())
    })
    .unwrap();
    let baseline = 10.0 * 8f64.ln() / (len + 20) as f64;
    println!("test: {} (memoryless baseline {baseline:.4})", t.evaluate(Split::Test).unwrap());
}

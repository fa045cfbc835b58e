//! A run split in two through a checkpoint ends exactly where the
//! uninterrupted run does.
//!
//!     cargo run --example checkpoint_resume

use mcrm::cells::Arch;
use mcrm::harness::{load_checkpoint, resume_training, run_training, TrainConfig};
use mcrm::tasks::TaskKind;

fn main() {
    let root = std::env::temp_dir().join("mcrm-resume");
    let mut c = TrainConfig::defaults(TaskKind::Copy, Arch::Mcrm);
    c.hidden = 16;
    c.len = 10;
    c.batch = 8;
    c.iters = 60;
    c.eval_every = 20;
    c.eval_size = 32;

    c.out_dir = root.join("whole");
    let whole = run_training(c.clone()).unwrap();

    c.iters = 30;
    c.out_dir = root.join("split");
    let first = run_training(c).unwrap();
    let resumed = resume_training(&first.checkpoint, Some(60), None).unwrap();

    let a = load_checkpoint(&whole.checkpoint).unwrap();
    let b = load_checkpoint(&resumed.checkpoint).unwrap();
    println!("uninterrupted: {}", whole.test);
    println!("resumed:       {}", resumed.test);
    println!("parameters identical: {}", a.model == b.model);
    println!("optimiser state identical: {}", a.opt == b.opt);
    println!("generator state identical: {}", a.rng == b.rng);
}

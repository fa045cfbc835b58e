//! Pixel-by-pixel classification on a generated IDX data set. Point it at
//! a directory holding the real MNIST files to train on those instead.
//!
//!     cargo run --release --example sequential_images -- [idx-dir]

use std::path::PathBuf;

use mcrm::cells::Arch;
use mcrm::harness::{run_training, TrainConfig};
use mcrm::numkit::Rng;
use mcrm::tasks::{synthetic_digits, write_idx_images, write_idx_labels, TaskKind};

fn main() {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            // 14x14 glyphs keep sequences at 196 steps.
            let dir = std::env::temp_dir().join("mcrm-digits");
            std::fs::create_dir_all(&dir).unwrap();
            let mut rng = Rng::seed_from_u64(11);
            for (prefix, n) in [("train", 600), ("t10k", 100)] {
                let (images, labels) = synthetic_digits(&mut rng, n, 14);
                write_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")), 14, 14, &images).unwrap();
                write_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")), &labels).unwrap();
            }
            dir
        }
    };

    let mut c = TrainConfig::defaults(TaskKind::Mnist, Arch::Mcrm);
    c.hidden = 16;
    c.batch = 16;
    c.lr = 3e-3;
    c.iters = 300;
    c.eval_every = 100;
    c.eval_size = 100;
    c.data_dir = Some(dir);
    c.out_dir = std::env::temp_dir().join("mcrm-images");
    let summary = run_training(c).unwrap();
    println!("{} / {}", summary.valid, summary.test);
    println!("curves in {}", summary.curves.display());
}

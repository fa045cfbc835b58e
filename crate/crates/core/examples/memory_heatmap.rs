//! Trains a small character model briefly, then writes the memory-state
//! grids for a phrase and prints the most persistent and most volatile
//! neurons.
//!
//!     cargo run --release --example memory_heatmap -- [out.csv]

use std::path::PathBuf;

use mcrm::cells::Arch;
use mcrm::harness::{export_heatmap, rank_neurons, TrainConfig, Trainer};
use mcrm::model::SeqInput;
use mcrm::tasks::TaskKind;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("mcrm-heatmap.csv"), PathBuf::from);

    let mut c = TrainConfig::defaults(TaskKind::Char, Arch::Mcrm);
    c.hidden = 24;
    c.embed = 16;
    c.batch = 8;
    c.bptt = 40;
    c.lr = 3e-3;
    c.out_dir = std::env::temp_dir().join("mcrm-heatmap-run");
    let mut t = Trainer::new(c).unwrap();
    t.run(100, |_| Ok(())).unwrap();

    let ck = t.checkpoint();
    let vocab = ck.vocab.as_ref().unwrap();
    let ids = vocab.encode("And God said, Let there be light: and there was light.").unwrap();
    let grids = export_heatmap(&ck.model, &SeqInput::Tokens(ids), &out).unwrap();
    for g in &grids {
        let (long, short) = rank_neurons(g);
        println!("{} {}: {} neurons x {} steps -> {}", g.arch, g.state, g.neurons(), g.steps(), out.display());
        for (l, s) in long.iter().zip(&short).take(3) {
            println!(
                "  long-term n{:<3} {:+.3}   short-term n{:<3} {:.3}",
                l.neuron, l.score, s.neuron, s.score
            );
        }
    }
}

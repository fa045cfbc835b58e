//! Parameter counts at the reference widths, plus the width each cell
//! needs to hit a fixed budget.
//!
//!     cargo run --example count_params

use mcrm::cells::{count_params, width_for_budget, Arch};
use mcrm::harness::{table_size, table_width, TrainConfig};
use mcrm::tasks::TaskKind;

fn main() {
    for task in [TaskKind::Adding, TaskKind::Mnist] {
        let target = table_size(task);
        println!("{} (reference {target})", task.name());
        for arch in Arch::ALL {
            let spec = TrainConfig::defaults(task, arch).model_spec(None);
            let p = table_width(task, arch);
            let n = count_params(arch, spec.input, p, spec.output);
            let dev = 100.0 * (n as f64 - target as f64) / target as f64;
            println!("  {:>5}  p={p:<4} {n:>8}  {dev:+6.2}%", arch.name());
        }
    }

    println!("widths for 50K parameters (m=16, 71 outputs, 71x16 embedding)");
    for arch in Arch::ALL {
        let p = width_for_budget(arch, 16, 71, 71 * 16, 50_000);
        println!("  {:>5}  p={p:<4} {:>8}", arch.name(), count_params(arch, 16, p, 71) + 71 * 16);
    }
}

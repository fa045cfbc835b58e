//! Backpropagation through time against central differences for every
//! cell type.
//!
//!     cargo run --example gradient_check

use mcrm::cells::Arch;
use mcrm::grad::{backprop_sequence, finite_diff_grad, max_relative_error};
use mcrm::model::{LossKind, Model, ModelSpec, SeqInput, Target};
use mcrm::numkit::{rand_uniform, Rng};

fn main() {
    let mut rng = Rng::seed_from_u64(3);
    for arch in Arch::ALL {
        let spec = ModelSpec {
            arch,
            input: 3,
            hidden: 4,
            output: 3,
            vocab: None,
        };
        let model = Model::init(spec, &mut rng).unwrap();
        let inputs: Vec<SeqInput> = (0..2)
            .map(|_| SeqInput::Dense((0..5).map(|_| rand_uniform(&mut rng, -1.0, 1.0, 3).unwrap()).collect()))
            .collect();
        for (loss, targets) in [
            (LossKind::Mse, vec![Target::Regression(vec![0.3, -0.2, 0.9]), Target::Regression(vec![-0.5, 0.1, 0.0])]),
            (LossKind::Ce, vec![Target::Class(2), Target::Class(0)]),
        ] {
            let (value, bp) = backprop_sequence(&model, &inputs, &targets, loss).unwrap();
            let fd = finite_diff_grad(&model, &inputs, &targets, loss, 1e-5).unwrap();
            println!(
                "{:>5} {loss}: loss {value:.6}, relative error {:.2e}",
                arch.name(),
                max_relative_error(&bp, &fd)
            );
        }
    }
}

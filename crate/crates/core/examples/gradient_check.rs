//! Compares the BPTT gradient with central differences on small random
//! problems for both cell kinds and every activation preset.
//!
//!     cargo run --example gradient_check

use lstm_varinit::cell::{ActivationPreset, CellKind};
use lstm_varinit::train::{gradcheck, random_problem};

fn main() -> lstm_varinit::Result<()> {
    let mut worst: f64 = 0.0;
    for kind in [CellKind::Traditional, CellKind::Peephole] {
        for preset in ActivationPreset::ALL {
            for seed in 0..3 {
                let (w, xs, ys) = random_problem(seed, kind, 3, 4)?;
                let g = gradcheck(&w, &xs, &ys, preset.spec(), kind, 1e-6)?;
                println!(
                    "{kind:?} {:<10} seed {seed}: {:.2e} (worst in {}[{}])",
                    preset.name(),
                    g.max_rel_err,
                    g.param,
                    g.index
                );
                worst = worst.max(g.max_rel_err);
            }
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}

//! Generates each synthetic series kind, writes it in UCR or panel format,
//! and reads it back.
//!
//!     cargo run --example synth_dataset -- [out-dir]

use std::path::PathBuf;

use lstm_varinit::data::{
    load_panel, load_ucr, synth_with_params, write_panel, write_ucr, Delimiter, SynthKind,
    SynthSpec,
};

fn main() -> lstm_varinit::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(std::env::temp_dir, PathBuf::from);

    for kind in [SynthKind::Sine, SynthKind::Ar1, SynthKind::Memory] {
        let (one, rhos) = synth_with_params(&SynthSpec {
            kind,
            count: 8,
            seq_len: 12,
            n_features: 1,
            noise_var: 0.01,
            seed: 2,
        })?;
        let path = dir.join(format!("{kind}.csv"));
        write_ucr(&one, &path)?;
        let back = load_ucr(&path, Delimiter::Comma)?;
        println!(
            "{kind}: {} sequences of length {:?} -> {}",
            back.len(),
            back.seq_len(),
            path.display()
        );
        if !rhos.is_empty() {
            println!("  first rho {:.3}", rhos[0]);
        }
    }

    let panel = synth_with_params(&SynthSpec {
        kind: SynthKind::Ar1,
        count: 5,
        seq_len: 8,
        n_features: 6,
        noise_var: 0.01,
        seed: 2,
    })?
    .0;
    let path = dir.join("panel.csv");
    write_panel(&panel, &path)?;
    let back = load_panel(&path)?;
    println!(
        "panel: {} subjects, {} features -> {}",
        back.len(),
        back.n_features,
        path.display()
    );
    Ok(())
}

//! Trains one peephole LSTM on noisy sine waves from a catalogued
//! initialization and prints the loss curve.
//!
//!     cargo run --release --example train_sine

use lstm_varinit::cell::{ActivationSpec, CellKind};
use lstm_varinit::data::{apply_stats, fit_stats, split, synth, SplitSpec, SynthKind, SynthSpec};
use lstm_varinit::init::{catalogue_config, sample_weights};
use lstm_varinit::math::Rng;
use lstm_varinit::train::{evaluate_mse, train, TrainConfig};

fn main() -> lstm_varinit::Result<()> {
    let raw = synth(&SynthSpec {
        kind: SynthKind::Sine,
        count: 60,
        seq_len: 30,
        n_features: 1,
        noise_var: 0.01,
        seed: 3,
    })?;
    let (tr, va) = split(&raw, &SplitSpec::default())?;
    let stats = fit_stats(&tr)?;
    let (tr, va) = (apply_stats(&tr, &stats)?, apply_stats(&va, &stats)?);

    let w0 = sample_weights(&catalogue_config(1, 1)?, 1, 1, &mut Rng::new(5))?;
    let tc = TrainConfig {
        epochs: 40,
        batch_fraction: 1.0,
        ..TrainConfig::default()
    };
    let (w, trace) = train(
        &w0,
        &tr,
        &va,
        &tc,
        ActivationSpec::REGRESSION,
        CellKind::Peephole,
    )?;

    for (epoch, (t, v)) in trace.train_loss.iter().zip(&trace.val_loss).enumerate() {
        if epoch % 5 == 4 {
            println!(
                "epoch {:>3}  train {t:.5}  val {:.5}",
                epoch + 1,
                v.unwrap_or(f64::NAN)
            );
        }
    }
    if let Some(d) = &trace.diverged {
        println!("diverged at epoch {}: {}", d.epoch, d.reason);
    }
    let val = evaluate_mse(&w, &va, ActivationSpec::REGRESSION, CellKind::Peephole)?;
    println!("final validation MSE {val:.5}");
    Ok(())
}

//! Monte-Carlo estimate of Var(h) and Var(c) for a freshly initialized
//! peephole cell, one step and then iterated.
//!
//!     cargo run --release --example variance_probe -- [config-index] [n]

use lstm_varinit::init::catalogue_config;
use lstm_varinit::math::Rng;
use lstm_varinit::probe::{probe_single_step, probe_stationarity};

fn main() -> lstm_varinit::Result<()> {
    let mut args = std::env::args().skip(1);
    let index: usize = args.next().map_or(1, |s| s.parse().expect("config index"));
    let n: usize = args
        .next()
        .map_or(1, |s| s.parse().expect("input dimension"));
    let cfg = catalogue_config(index, n)?;
    let mut rng = Rng::new(1);

    let one = probe_single_step(&cfg, n, 20_000, &mut rng, true)?;
    println!("{one}");

    let many = probe_stationarity(&cfg, n, 10, 2_000, &mut rng)?;
    println!("{many}");
    Ok(())
}

//! Builds a new peephole configuration by fixing ten variances and solving
//! the equality clause for the output peephole variance, then saves it as
//! JSON for `lstm-varinit init-check` and `bench` (`"file:<path>"`).
//!
//!     cargo run --example design_config -- my-config.json

use lstm_varinit::init::{
    solve_output_peephole_variance, validate, GateMode, PeepholeVariances, VarianceConfig,
    DEFAULT_TOLERANCE,
};

fn main() -> lstm_varinit::Result<()> {
    let out = std::env::args().nth(1);
    let n = 4;
    let per_n = |k: f64| k / n as f64;

    let mut cfg = VarianceConfig::peephole(
        n,
        GateMode::SigmoidLinearized,
        [
            (per_n(0.5), per_n(0.5)),
            (per_n(1.0), per_n(1.0)),
            (per_n(0.5), per_n(0.5)),
            (per_n(1.0), per_n(1.0)),
        ],
        PeepholeVariances {
            vf: 0.5,
            vi: 0.5,
            vo: 1.0,
        },
    );
    let vo = solve_output_peephole_variance(&cfg)?;
    cfg.var_vo = Some(vo);
    println!("Var(vo) = {vo:.6}");

    let report = validate(&cfg, DEFAULT_TOLERANCE)?;
    println!("{report}");

    if let Some(path) = out {
        std::fs::write(&path, cfg.to_json()).map_err(|e| lstm_varinit::Error::io(&path, e))?;
        println!("wrote {path}");
    }
    Ok(())
}

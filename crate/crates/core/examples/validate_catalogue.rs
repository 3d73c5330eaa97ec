//! Checks the four catalogued peephole configurations and the two baseline
//! profiles against the peephole/sigmoid condition, at N = 1 and N = 6.
//!
//!     cargo run --example validate_catalogue

use lstm_varinit::cell::CellKind;
use lstm_varinit::init::{
    catalogue_config, stationary_cell_variance, validate, GateMode, VarianceConfig,
    DEFAULT_TOLERANCE,
};

fn main() -> lstm_varinit::Result<()> {
    for n in [1, 6] {
        println!("N = {n}");
        let mut configs: Vec<(String, VarianceConfig)> = (1..=4)
            .map(|k| Ok((format!("proposed-{k}"), catalogue_config(k, n)?)))
            .collect::<lstm_varinit::Result<_>>()?;
        configs.push((
            "normalized".into(),
            VarianceConfig::normalized_profile(n, CellKind::Peephole, GateMode::SigmoidLinearized),
        ));

        for (name, cfg) in &configs {
            let report = validate(cfg, DEFAULT_TOLERANCE)?;
            println!(
                "  {name:<12} lhs {:>9.6}  rhs {:>9.6}  residual {:.2e}  Var(c) {:.4}  {}",
                report.lhs,
                report.rhs,
                report.equality_residual,
                stationary_cell_variance(cfg)?,
                if report.satisfied { "ok" } else { "VIOLATED" }
            );
        }
    }
    Ok(())
}

//! A small initializer-by-seed grid on a synthetic AR(1) panel, written to
//! a directory of per-run traces plus `summary.csv`.
//!
//!     cargo run --release --example bench_grid -- [out-dir]

use std::path::{Path, PathBuf};

use lstm_varinit::bench::{run_experiment, ExperimentSpec};

fn main() -> lstm_varinit::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let spec = ExperimentSpec::from_json(
        r#"{
            "dataset": {
                "source": "synth", "kind": "ar1", "count": 40, "seq_len": 8,
                "n_features": 3, "noise_var": 0.01, "seed": 11, "test_count": 20
            },
            "initializers": ["proposed-1", "proposed-2", "normalized", "orthogonal"],
            "train": { "epochs": 30, "batch_fraction": 1.0 },
            "seeds": [1, 2, 3],
            "output_dir": "runs/example"
        }"#,
    )?;
    let report = run_experiment(&spec, Path::new("."))?;
    print!("{report}");
    if let Some(dir) = out {
        report.write(&dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

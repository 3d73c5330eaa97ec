//! Acceptance criteria. Each `criterion_*` test prints one `PASS`/`FAIL`
//! line to stderr (uncaptured) and then asserts. The `cli` and `corpus`
//! modules cover the binary and the malformed-input corpus.

mod cli;
mod corpus;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use lstm_varinit::bench::{prepare, run_experiment, BenchReport, ExperimentSpec, Initializer};
use lstm_varinit::cell::{
    step_peephole, step_traditional, unroll, ActivationPreset, ActivationSpec, CellKind,
    LstmWeights, Peepholes,
};

use lstm_varinit::data::{DatasetSource, SplitSpec, SynthKind, SynthSpec};
use lstm_varinit::init::{
    catalogue_config, stationary_cell_variance, validate_peephole_sigmoid, GateMode,
    VarianceConfig, DEFAULT_TOLERANCE,
};
use lstm_varinit::math::{gaussian, Rng, Vector};
use lstm_varinit::probe::{probe_single_step, probe_stationarity};
use lstm_varinit::train::{evaluate_mse, gradcheck, random_problem};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "\n[{tag}] criterion {id} ({name}): {detail}"
    );
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn criterion_1_catalogue_consistency() {
    let mut worst: f64 = 0.0;
    let mut all = true;
    for n in [1, 6] {
        for k in 1..=4 {
            let cfg = catalogue_config(k, n).unwrap();
            let r = validate_peephole_sigmoid(&cfg, DEFAULT_TOLERANCE).unwrap();
            worst = worst.max(r.equality_residual);
            all &= r.satisfied && r.equality_residual < 1e-12;
        }
    }
    verdict(
        1,
        "catalogue consistency",
        all,
        &format!("8 configs, worst equality residual {worst:.3e} (< 1e-12)"),
    );
    assert!(all);
}

#[test]
fn criterion_2_baseline_rejection() {
    // The orthogonal baseline has the same per-entry variance profile as the
    // normalized one (1/N), so both reduce to this profile.
    let cfg =
        VarianceConfig::normalized_profile(1, CellKind::Peephole, GateMode::SigmoidLinearized);
    let r = validate_peephole_sigmoid(&cfg, DEFAULT_TOLERANCE).unwrap();
    // lhs = sqrt(4*1*1*2*(2+4)), rhs = sqrt(2^2 + 64) - 2
    let expected = 48f64.sqrt() - (68f64.sqrt() - 2.0);
    let pass = !r.equality_ok()
        && !r.satisfied
        && r.equality_residual > 0.1
        && (r.equality_residual - expected).abs() < 1e-12;
    verdict(
        2,
        "baseline rejection",
        pass,
        &format!(
            "normalized/orthogonal at N=1: lhs {:.4}, rhs {:.4}, residual {:.4} (> 0.1)",
            r.lhs, r.rhs, r.equality_residual
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_variance_preservation() {
    let mut lines = Vec::new();
    let mut pass = true;
    for n in [1, 6] {
        for k in 1..=4 {
            let cfg = catalogue_config(k, n).unwrap();
            let r = probe_single_step(&cfg, n, 100_000, &mut Rng::new(k as u64), true).unwrap();
            let ok = r.rel_err_h < 0.05;
            pass &= ok;
            lines.push(format!(
                "P{k} N={n}: Var(h) {:.3} (se {:.3}), Var(c) {:.3} vs {:.3}{}",
                r.est_var_h,
                r.se_var_h,
                r.est_var_c,
                r.predicted_var_c,
                if ok { "" } else { " [out]" }
            ));
        }
    }
    let cfg = catalogue_config(1, 1).unwrap();
    let predicted = stationary_cell_variance(&cfg).unwrap();
    let st = probe_stationarity(&cfg, 1, 50, 10_000, &mut Rng::new(9)).unwrap();
    let drift_ok = st.diverged_at_step.is_none() && st.max_drift_c.is_some_and(|d| d <= 0.10);
    pass &= drift_ok && (predicted - 2.0).abs() < 1e-12;
    lines.push(format!(
        "stationarity P1 N=1: predicted Var(c) {predicted}, max drift {:?}, diverged at step {:?}",
        st.max_drift_c, st.diverged_at_step
    ));
    verdict(3, "variance preservation", pass, &lines.join("; "));
    assert!(pass, "{}", lines.join("\n"));
}

#[test]
fn criterion_4_gradient_correctness() {
    let presets = [
        ActivationPreset::Identity,
        ActivationPreset::Classic,
        ActivationPreset::Linearized,
    ];
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut count = 0;
    for i in 0..20u64 {
        let kind = if i % 2 == 0 {
            CellKind::Traditional
        } else {
            CellKind::Peephole
        };
        let preset = presets[(i / 2 % 3) as usize];
        let m = 1 + (i as usize % 4);
        let t = 1 + (i as usize * 7 % 5);
        let (w, xs, ys) = random_problem(1000 + i, kind, m, t).unwrap();
        let g = gradcheck(&w, &xs, &ys, preset.spec(), kind, 1e-6).unwrap();
        count += 1;
        if g.max_rel_err >= worst {
            worst = g.max_rel_err;
            worst_at = format!("{kind:?}/{} m={m} t={t} {}", preset.name(), g.param);
        }
    }
    let pass = worst < 1e-5;
    verdict(
        4,
        "gradient correctness",
        pass,
        &format!("{count} instances, worst relative error {worst:.2e} at {worst_at} (< 1e-5)"),
    );
    assert!(pass);
}

fn medians_ok(report: &BenchReport) -> (bool, String) {
    let base: Vec<_> = [Initializer::Normalized, Initializer::Orthogonal]
        .iter()
        .map(|i| report.row(i).expect("baseline row"))
        .collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for k in 1..=4 {
        let row = report.row(&Initializer::Proposed(k)).expect("proposed row");
        let train_ok = base
            .iter()
            .all(|b| row.median_train_loss <= b.median_train_loss);
        let test_ok = base
            .iter()
            .all(|b| row.median_test_mse <= b.median_test_mse);
        let div_ok = row.diverged == 0;
        if !(train_ok && test_ok && div_ok) {
            ok = false;
            notes.push(format!(
                "proposed-{k} train {:.4} test {:.4}{}",
                row.median_train_loss,
                row.median_test_mse,
                if div_ok { "" } else { " diverged" }
            ));
        }
    }
    let b = base
        .iter()
        .map(|r| {
            format!(
                "{} {:.4}/{:.4}",
                r.initializer, r.median_train_loss, r.median_test_mse
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    let detail = if ok {
        format!("all proposed <= baselines ({b})")
    } else {
        format!("{} vs {b}", notes.join(", "))
    };
    (ok, detail)
}

#[test]
fn criterion_5_directional_reproduction() {
    let dir = manifest_dir().join("experiments");
    let mut pass = true;
    let mut lines = Vec::new();
    for name in ["sine", "ar1", "panel"] {
        let path = dir.join(format!("{name}.json"));
        let spec = ExperimentSpec::load(&path).unwrap();
        let report = run_experiment(&spec, &dir).unwrap();
        let (ok, detail) = medians_ok(&report);
        pass &= ok;
        lines.push(format!("{name}: {}", detail));
    }
    verdict(5, "directional reproduction", pass, &lines.join("; "));
    assert!(pass, "{}", lines.join("\n"));
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["lstm-varinit"];
    full.extend_from_slice(args);
    let code = lstm_varinit::cli::run(full, &mut out, &mut err);
    (code, out)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_6_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let mut checked = Vec::new();
    let mut pass = true;

    let commands: Vec<Vec<String>> = vec![
        vec![
            "init-check".into(),
            "proposed-2".into(),
            "--n".into(),
            "6".into(),
            "--json".into(),
        ],
        vec![
            "var-probe".into(),
            "proposed-1".into(),
            "--trials".into(),
            "2000".into(),
            "--steps".into(),
            "5".into(),
            "--steps-trials".into(),
            "1000".into(),
            "--seed".into(),
            "4".into(),
            "--json".into(),
        ],
        vec![
            "gradcheck".into(),
            "--seed".into(),
            "3".into(),
            "--m".into(),
            "4".into(),
        ],
    ];
    for args in &commands {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = run_cli(&a);
        let second = run_cli(&a);
        pass &= first == second && !first.1.is_empty();
        checked.push(args[0].clone());
    }

    for out in ["synth_a.csv", "synth_b.csv"] {
        let (code, _) = run_cli(&[
            "synth",
            "--kind",
            "ar1",
            "--count",
            "20",
            "--seq-len",
            "10",
            "--seed",
            "5",
            "--out",
            &t(out),
        ]);
        assert_eq!(code, 0);
    }
    pass &= std::fs::read(t("synth_a.csv")).unwrap() == std::fs::read(t("synth_b.csv")).unwrap();
    checked.push("synth".into());

    let spec = ExperimentSpec {
        dataset: DatasetSource::Synth {
            spec: SynthSpec {
                kind: SynthKind::Sine,
                count: 30,
                seq_len: 10,
                n_features: 2,
                noise_var: 0.01,
                seed: 3,
            },
            test_count: 10,
        },
        initializers: Initializer::TABLE.to_vec(),
        cell: CellKind::Peephole,
        activation: ActivationPreset::Regression,
        train: lstm_varinit::train::TrainConfig {
            epochs: 15,
            batch_fraction: 1.0,
            ..Default::default()
        },
        split: SplitSpec::default(),
        seeds: vec![1, 2],
        output_dir: PathBuf::from("unused"),
    };
    let a = run_experiment(&spec, tmp.path()).unwrap();
    // Different worker counts must not change anything.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let b = pool.install(|| run_experiment(&spec, tmp.path())).unwrap();
    a.write(&tmp.path().join("bench_a")).unwrap();
    b.write(&tmp.path().join("bench_b")).unwrap();
    let (fa, fb) = (
        dir_bytes(&tmp.path().join("bench_a")),
        dir_bytes(&tmp.path().join("bench_b")),
    );
    pass &= fa == fb && fa.len() == 2 * 12 + 1;
    checked.push(format!("bench ({} files)", fa.len()));

    verdict(
        6,
        "determinism",
        pass,
        &format!("byte-identical re-runs: {}", checked.join(", ")),
    );
    assert!(pass);
}

fn with_zero_peepholes(w: &LstmWeights) -> LstmWeights {
    let m = w.hidden_dim();
    LstmWeights {
        peephole: Some(Peepholes {
            vf: Vector::zeros(m),
            vi: Vector::zeros(m),
            vo: Vector::zeros(m),
        }),
        ..w.clone()
    }
}

fn bits(states: &[lstm_varinit::cell::StepState]) -> Vec<u64> {
    states
        .iter()
        .flat_map(|s| {
            s.h.iter()
                .chain(s.c.iter())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn criterion_7_degeneracy_oracle() {
    let mut pass = true;
    let mut rng = Rng::new(77);
    for preset in ActivationPreset::ALL {
        // 100 independent random steps for every preset.
        let (w, _, _) = random_problem(77, CellKind::Traditional, 3, 1).unwrap();
        let wp = with_zero_peepholes(&w);
        for _ in 0..100 {
            let x = gaussian(&mut rng, 0.0, 1.0, 3).unwrap();
            let h = gaussian(&mut rng, 0.0, 1.0, 3).unwrap();
            let c = gaussian(&mut rng, 0.0, 1.0, 3).unwrap();
            let a = step_traditional(&w, &x, &h, &c, preset.spec()).unwrap();
            let b = step_peephole(&wp, &x, &h, &c, preset.spec()).unwrap();
            pass &= bits(&[a]) == bits(&[b]);
        }
    }
    for preset in [ActivationPreset::Classic, ActivationPreset::Regression] {
        // A 100-step unroll where the state stays bounded.
        let (w, xs, _) = random_problem(78, CellKind::Traditional, 3, 100).unwrap();
        let trad = unroll(&w, &xs, preset.spec(), CellKind::Traditional).unwrap();
        let peep = unroll(
            &with_zero_peepholes(&w),
            &xs,
            preset.spec(),
            CellKind::Peephole,
        )
        .unwrap();
        pass &= trad.len() == 100 && bits(&trad) == bits(&peep);
    }
    let bitwise = pass;

    let source = DatasetSource::Synth {
        spec: SynthSpec {
            kind: SynthKind::Sine,
            count: 200,
            seq_len: 50,
            n_features: 1,
            noise_var: 0.01,
            seed: 7,
        },
        test_count: 100,
    };
    let data = prepare(&source, &SplitSpec::default(), Path::new(".")).unwrap();
    let mut mses = Vec::new();
    for kind in [CellKind::Traditional, CellKind::Peephole] {
        for act in [ActivationSpec::REGRESSION, ActivationSpec::CLASSIC] {
            let mse =
                evaluate_mse(&LstmWeights::zeros(1, 1, kind), &data.train, act, kind).unwrap();
            pass &= (mse - 1.0).abs() <= 0.1;
            mses.push(mse);
        }
    }
    verdict(
        7,
        "degeneracy oracle",
        pass,
        &format!(
            "zero-V peephole == traditional bitwise (100 random steps per preset, 100-step unrolls): {bitwise}; zero-network MSE {:.4}..{:.4} (1 +/- 0.1)",
            mses.iter().cloned().fold(f64::INFINITY, f64::min),
            mses.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ),
    );
    assert!(pass);
}

//! The `lstm-varinit` binary: exit codes, `VARINIT_SEED`, and output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lstm-varinit"));
    c.env_remove("VARINIT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn manifest(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn init_check_exit_codes() {
    for k in 1..=4 {
        let out = run(&["init-check", &format!("proposed-{k}"), "--n", "6"]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
        assert!(stdout(&out).contains("SATISFIED"));
    }
    assert_eq!(code(&run(&["init-check", "normalized"])), 1);
    assert_eq!(code(&run(&["init-check", "orthogonal", "--n", "6"])), 1);
    assert_eq!(
        code(&run(&[
            "init-check",
            &manifest("configs/traditional-identity.json")
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "init-check",
            &manifest("configs/proposed-3.json"),
            "--n",
            "4"
        ])),
        0
    );
}

#[test]
fn init_check_json_is_parseable() {
    let out = run(&["init-check", "proposed-1", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["satisfied"], true);
    assert!(v["equality_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn usage_and_parse_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["init-check"])), 2);
    assert_eq!(code(&run(&["init-check", "proposed-7"])), 2);
    assert_eq!(code(&run(&["init-check", "/nonexistent/config.json"])), 2);
    assert_eq!(
        code(&run(&[
            "init-check",
            &manifest("tests/fixtures/bad/config_truncated.json")
        ])),
        2
    );
    assert_eq!(
        code(&run(&["var-probe", "proposed-1", "--trials", "10"])),
        2
    );
    assert_eq!(code(&run(&["gradcheck", "--eps", "0"])), 2);
    assert_eq!(
        code(&run(&[
            "bench",
            &manifest("tests/fixtures/bad/experiment_bad_initializer.json")
        ])),
        2
    );
    let bad_seed = bin()
        .args(["gradcheck"])
        .env("VARINIT_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&bad_seed), 2);
}

#[test]
fn gradcheck_passes_and_detects_a_corrupted_gradient() {
    for kind in ["traditional", "peephole"] {
        for act in ["identity", "classic", "linearized", "regression"] {
            let out = run(&[
                "gradcheck",
                "--kind",
                kind,
                "--act",
                act,
                "--m",
                "4",
                "--t",
                "5",
            ]);
            assert_eq!(code(&out), 0, "{kind}/{act}: {}", stdout(&out));
        }
    }
    assert_eq!(code(&run(&["gradcheck", "--corrupt"])), 1);
}

#[test]
fn var_probe_flags_drift_with_exit_1() {
    let out = run(&["var-probe", "proposed-1", "--trials", "2000"]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "var-probe",
        "proposed-1",
        "--trials",
        "2000",
        "--steps",
        "20",
        "--steps-trials",
        "1000",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("DRIFT FLAGGED"));
}

#[test]
fn seed_env_matches_explicit_seed() {
    let explicit = run(&["gradcheck", "--seed", "42"]);
    let env = bin()
        .args(["gradcheck"])
        .env("VARINIT_SEED", "42")
        .output()
        .unwrap();
    let other = run(&["gradcheck", "--seed", "43"]);
    assert_eq!(explicit.stdout, env.stdout);
    assert_ne!(explicit.stdout, other.stdout);
    // An explicit flag wins over the environment.
    let both = bin()
        .args(["gradcheck", "--seed", "43"])
        .env("VARINIT_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(both.stdout, other.stdout);
}

#[test]
fn synth_then_bench_on_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    for (name, count, seed) in [("train.csv", "30", "1"), ("test.csv", "10", "2")] {
        let out = run(&[
            "synth",
            "--kind",
            "ar1",
            "--count",
            count,
            "--seq-len",
            "6",
            "--n-features",
            "2",
            "--seed",
            seed,
            "--out",
            &p(name),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let spec = r#"{
        "dataset": { "source": "panel", "train": "train.csv", "test": "test.csv" },
        "initializers": ["proposed-2", "normalized", "orthogonal", "file:cfg.json"],
        "train": { "epochs": 5, "batch_fraction": 1.0 },
        "seeds": [1, 2],
        "output_dir": "runs"
    }"#;
    std::fs::write(p("exp.json"), spec).unwrap();
    std::fs::copy(manifest("configs/proposed-4.json"), p("cfg.json")).unwrap();

    let out = run(&["bench", &p("exp.json"), "--out", &p("out")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(p("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5, "{summary}");
    assert!(PathBuf::from(p("out/custom-cfg_seed2.csv")).exists());
    assert!(PathBuf::from(p("out/proposed-2_seed1.json")).exists());

    // The seed from the environment replaces the experiment's seed list.
    let out = bin()
        .args(["bench", &p("exp.json"), "--out", &p("env")])
        .env("VARINIT_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(PathBuf::from(p("env/normalized_seed9.csv")).exists());
    assert!(!PathBuf::from(p("env/normalized_seed1.csv")).exists());
}

#[test]
fn bench_reports_divergence_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = r#"{
        "dataset": { "source": "synth", "kind": "sine", "count": 20, "seq_len": 10,
                     "n_features": 1, "noise_var": 0.01, "seed": 1, "test_count": 5 },
        "initializers": ["normalized"],
        "train": { "epochs": 20, "batch_fraction": 1.0, "divergence_threshold": 0.5 },
        "seeds": [1],
        "output_dir": "runs"
    }"#;
    let path = tmp.path().join("exp.json");
    std::fs::write(&path, spec).unwrap();
    let out = run(&[
        "bench",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).contains("diverged: normalized_seed1 at epoch"));
}

//! Every malformed input under `tests/fixtures/bad` must be rejected with a
//! specific error, located where the format allows it.

use std::path::{Path, PathBuf};

use lstm_varinit::bench::{prepare, ExperimentSpec};
use lstm_varinit::data::{load_panel, load_ucr, Delimiter};
use lstm_varinit::init::VarianceConfig;
use lstm_varinit::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load(name: &str) -> Error {
    let p = fixture(name);
    let file = p.file_name().unwrap().to_string_lossy().into_owned();
    let result = if file.starts_with("ucr") {
        load_ucr(&p, Delimiter::Comma).map(|_| ())
    } else if file.starts_with("panel") {
        load_panel(&p).map(|_| ())
    } else if file.starts_with("config") {
        VarianceConfig::load(&p).map(|_| ())
    } else {
        ExperimentSpec::load(&p)
            .and_then(|s| prepare(&s.dataset, &s.split, p.parent().unwrap()).map(|_| ()))
    };
    result.expect_err(&format!("{name} should be rejected"))
}

fn parse_line(e: &Error) -> Option<usize> {
    match e {
        Error::Parse { line, .. } | Error::UnsupportedMissingValue { line, .. } => Some(*line),
        _ => None,
    }
}

#[test]
fn corpus_is_complete() {
    let count = std::fs::read_dir(fixture("bad")).unwrap().count();
    assert!(count >= 10);
    assert_eq!(
        count,
        EXPECTED.len(),
        "every bad fixture needs an expectation"
    );
}

enum Expect {
    Parse(usize, &'static str),
    Missing(usize, &'static str),
    Invalid(&'static str),
    Json(&'static str),
    Io,
}

const EXPECTED: &[(&str, Expect)] = &[
    ("bad/ucr_ragged.csv", Expect::Parse(2, "expected 3 values")),
    (
        "bad/ucr_label_text.csv",
        Expect::Parse(1, "class label `cat`"),
    ),
    (
        "bad/ucr_too_short.csv",
        Expect::Parse(1, "at least 2 values"),
    ),
    ("bad/ucr_non_numeric.csv", Expect::Parse(1, "`abc`")),
    ("bad/ucr_empty.csv", Expect::Invalid("no sequences")),
    ("bad/panel_missing_na.csv", Expect::Missing(3, "a")),
    ("bad/panel_missing_blank.csv", Expect::Missing(3, "a")),
    (
        "bad/panel_noncontiguous.csv",
        Expect::Parse(5, "not contiguous"),
    ),
    ("bad/panel_time_gap.csv", Expect::Parse(3, "expected t = 2")),
    ("bad/panel_bad_header.csv", Expect::Parse(1, "subject_id,t")),
    (
        "bad/panel_single_step.csv",
        Expect::Parse(2, "single timestep"),
    ),
    (
        "bad/config_missing_fields.json",
        Expect::Json("missing field"),
    ),
    (
        "bad/config_negative_variance.json",
        Expect::Invalid("var_wf"),
    ),
    (
        "bad/config_peephole_without_v.json",
        Expect::Invalid("var_vf"),
    ),
    (
        "bad/config_unknown_key.json",
        Expect::Json("unknown field `var_extra`"),
    ),
    ("bad/config_truncated.json", Expect::Json("EOF")),
    (
        "bad/experiment_bad_initializer.json",
        Expect::Json("proposed-9"),
    ),
    ("bad/experiment_no_seeds.json", Expect::Invalid("seed")),
    (
        "bad/experiment_negative_lr.json",
        Expect::Invalid("learning_rate"),
    ),
    ("bad/experiment_missing_file.json", Expect::Io),
];

#[test]
fn bad_fixtures_fail_as_expected() {
    for (name, expect) in EXPECTED {
        let err = load(name);
        let msg = err.to_string();
        match (expect, &err) {
            (Expect::Parse(line, needle), Error::Parse { .. }) => {
                assert_eq!(parse_line(&err), Some(*line), "{name}: {msg}");
                assert!(msg.contains(needle), "{name}: {msg}");
            }
            (Expect::Missing(line, column), Error::UnsupportedMissingValue { column: c, .. }) => {
                assert_eq!(parse_line(&err), Some(*line), "{name}: {msg}");
                assert_eq!(c, column, "{name}");
            }
            (Expect::Invalid(needle), Error::InvalidArgument(m)) => {
                assert!(m.contains(needle), "{name}: {msg}")
            }
            (Expect::Json(needle), Error::Json(_)) => {
                assert!(msg.contains(needle), "{name}: {msg}")
            }
            (Expect::Io, Error::Io { .. }) => {}
            _ => panic!("{name}: unexpected error kind: {err:?}"),
        }
        // The path of the offending file is part of every located message.
        if parse_line(&err).is_some() {
            assert!(
                msg.contains(name.trim_start_matches("bad/")),
                "{name}: {msg}"
            );
        }
    }
}

#[test]
fn good_fixtures_load() {
    let ucr = load_ucr(fixture("good/ucr.tsv"), Delimiter::Tab).unwrap();
    assert_eq!((ucr.len(), ucr.seq_len(), ucr.n_features), (3, Some(5), 1));
    let panel = load_panel(fixture("good/panel.csv")).unwrap();
    assert_eq!(
        (panel.len(), panel.seq_len(), panel.n_features),
        (2, Some(3), 2)
    );
}

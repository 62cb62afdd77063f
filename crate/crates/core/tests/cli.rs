use std::path::Path;
use std::process::{Command, Output};

fn holdscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holdscan"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const BROKEN: &str = "\
call_id,turn_index,channel,start_ms,end_ms,text,label
c1,0,client,0,2500,hello,0
c1,1,agent,5200,2600,end before start,1
";

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&holdscan(&["--help"])), 0);
    assert_eq!(code(&holdscan(&[])), 1);
    assert_eq!(code(&holdscan(&["frobnicate"])), 1);
}

#[test]
fn missing_file_is_io_error() {
    let out = holdscan(&["validate", "/nonexistent/transcripts.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = holdscan(&["generate", "--calls", "5", "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn invalid_rows_exit_2_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.csv");
    std::fs::write(&file, BROKEN).unwrap();
    let out = holdscan(&["validate", path(&file)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn generate_validate_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let out = holdscan(&[
        "generate",
        "--seed",
        "3",
        "--calls",
        "40",
        "--out",
        path(&gen),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let transcripts = gen.join("transcripts.csv");
    let first = std::fs::read_to_string(&transcripts).unwrap();
    assert!(first.starts_with("# holdscan "));

    assert_eq!(code(&holdscan(&["validate", path(&transcripts)])), 0);

    let audit_dir = dir.path().join("audit");
    let out = holdscan(&[
        "audit",
        path(&transcripts),
        "--holds",
        path(&gen.join("holds.csv")),
        "--gold",
        "--out",
        path(&audit_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let audit: serde_json::Value =
        serde_json::from_slice(&std::fs::read(audit_dir.join("audit.json")).unwrap()).unwrap();
    let ledger: serde_json::Value =
        serde_json::from_slice(&std::fs::read(gen.join("ledger.json")).unwrap()).unwrap();
    let planted = ledger["violations"].as_array().unwrap();
    for kind in ["missing_opening", "missing_closing", "unregistered_hold"] {
        let n = planted.iter().filter(|v| v["kind"] == kind).count();
        assert_eq!(
            audit["summary"][kind].as_u64().unwrap() as usize,
            n,
            "{kind}"
        );
    }
    assert!(audit["config_hash"].is_string());
}

#[test]
fn sweep_rejects_unknown_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = holdscan(&[
        "sweep",
        "--seed",
        "1",
        "--axis",
        "momentum",
        "--values",
        "0.9",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = holdscan(&[
                "pipeline",
                "--seed",
                "11",
                "--calls",
                "60",
                "--folds",
                "4",
                "--epochs",
                "2",
                "--out",
                path(&out_dir),
            ]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            for f in [
                "fold_plan.json",
                "training_curve.csv",
                "table.txt",
                "checkpoints/fold_1.model",
            ] {
                assert!(out_dir.join(f).exists(), "{f} missing");
            }
            std::fs::read(out_dir.join("metrics.json")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "seed = 5\ncalls = 30\n").unwrap();
    let out = holdscan(&[
        "generate",
        "--config",
        path(&config),
        "--calls",
        "12",
        "--out",
        path(&dir.path().join("g")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ledger: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("g/ledger.json")).unwrap()).unwrap();
    assert!(ledger["tool"].as_str().unwrap().starts_with("holdscan"));

    std::fs::write(&config, "seed = 5\nbogus_key = 1\n").unwrap();
    let out = holdscan(&[
        "generate",
        "--config",
        path(&config),
        "--out",
        path(&dir.path().join("h")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn evaluate_without_threshold_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_eq!(
        code(&holdscan(&[
            "generate",
            "--seed",
            "2",
            "--calls",
            "10",
            "--out",
            path(&gen)
        ])),
        0
    );
    let preds = dir.path().join("p.csv");
    std::fs::write(&preds, "call_id,turn_index,p0,p1,p2\n").unwrap();
    let out = holdscan(&[
        "evaluate",
        path(&gen.join("transcripts.csv")),
        "--predictions",
        path(&preds),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn external_probabilities_with_missing_turns_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_eq!(
        code(&holdscan(&[
            "generate",
            "--seed",
            "2",
            "--calls",
            "30",
            "--out",
            path(&gen)
        ])),
        0
    );
    let preds = dir.path().join("p.csv");
    std::fs::write(&preds, "call_id,turn_index,p0,p1,p2\n").unwrap();
    let out = holdscan(&[
        "pipeline",
        path(&gen.join("transcripts.csv")),
        "--seed",
        "2",
        "--folds",
        "3",
        "--external-proba",
        path(&preds),
        "--out",
        path(&dir.path().join("run")),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn undefined_auc_is_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let transcripts = dir.path().join("t.csv");
    std::fs::write(
        &transcripts,
        "call_id,turn_index,channel,start_ms,end_ms,text,label\nc1,0,agent,0,100,hi,0\nc1,1,client,200,300,hello,0\n",
    )
    .unwrap();
    let preds = dir.path().join("p.csv");
    std::fs::write(
        &preds,
        "call_id,turn_index,p0,p1,p2\nc1,0,0.9,0.05,0.05\nc1,1,0.2,0.7,0.1\n",
    )
    .unwrap();
    let out = holdscan(&[
        "evaluate",
        path(&transcripts),
        "--predictions",
        path(&preds),
        "--threshold",
        "0.5",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

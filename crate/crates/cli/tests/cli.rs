use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn negfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negfactor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = negfactor(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SPEC: &str = r#"{
  "n_verbs": 4,
  "n_frames": 2,
  "n_participants": 3,
  "true_factors": {
    "n_lexical": 1,
    "n_structural": 1,
    "lambda": [[0.9], [0.2], [0.7], [0.4]],
    "pi": [[0.8, 0.5]],
    "psi": [[0.9], [0.3], [0.8], [0.5]],
    "phi": [[0.9, 0.8, 0.7, 0.95]],
    "omega": [[0.9, 0.9, 0.85, 0.8]]
  },
  "noise_scale": 0.05,
  "seed": 3
}"#;

const FAST: &str = r#"{ "max_iterations": 300, "restarts": 1 }"#;

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.json"), SPEC).unwrap();
    fs::write(d.join("fit.json"), FAST).unwrap();
    fs::write(
        d.join("cv.json"),
        r#"{ "fit": { "max_iterations": 100, "restarts": 1 }, "n_boot": 200 }"#,
    )
    .unwrap();

    let out = ok(&[
        "data",
        "synth",
        "--spec",
        p(&d.join("spec.json")),
        "--out",
        p(&d.join("data.csv")),
        "--spec-out",
        p(&d.join("realized.json")),
    ]);
    assert!(out.contains("wrote 96 records"));
    let csv = fs::read_to_string(d.join("data.csv")).unwrap();
    assert!(csv.starts_with("verb,frame,subject,tense,participant,negraising,acceptability\n"));
    assert!(fs::read_to_string(d.join("realized.json"))
        .unwrap()
        .contains("\"realized\""));

    let summary = ok(&["data", "summarize", p(&d.join("data.csv"))]);
    assert!(summary.contains("verbs:        4"));

    ok(&[
        "fit",
        "--data",
        p(&d.join("data.csv")),
        "--n-lexical",
        "1",
        "--n-structural",
        "1",
        "--config",
        p(&d.join("fit.json")),
        "--out",
        p(&d.join("model.json")),
    ]);
    let model = fs::read_to_string(d.join("model.json")).unwrap();
    assert!(model.contains("\"logits\""));

    ok(&[
        "report",
        "--model",
        p(&d.join("model.json")),
        "--out-dir",
        p(&d.join("report")),
    ]);
    for f in [
        "phi.csv",
        "omega.csv",
        "pi.csv",
        "verb_scores.csv",
        "bundle.json",
    ] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }

    ok(&[
        "normalize",
        "--data",
        p(&d.join("data.csv")),
        "--config",
        p(&d.join("fit.json")),
        "--out",
        p(&d.join("scores.csv")),
    ]);
    let scores = fs::read_to_string(d.join("scores.csv")).unwrap();
    assert!(scores.starts_with("verb,frame,subject,tense,nu,alpha,score\n"));
    assert_eq!(scores.lines().count(), 1 + 4 * 2 * 4);

    let table = ok(&[
        "cv",
        "--data",
        p(&d.join("data.csv")),
        "--grid",
        "1,0;1,1",
        "--config",
        p(&d.join("cv.json")),
        "--out",
        p(&d.join("report.json")),
    ]);
    assert_eq!(table.lines().count(), 2);
    let cmp = ok(&[
        "compare",
        "--report",
        p(&d.join("report.json")),
        "--a",
        "1,0",
        "--b",
        "1,1",
        "--n-boot",
        "100",
    ]);
    assert!(cmp.contains("\"reliable\""));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "verb,frame,subject,tense,negraising,acceptability\nthink,NP __ that S,first,past,0.5,0.5\n").unwrap();
    let out = negfactor(&["data", "summarize", p(&path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("participant"));

    let out = negfactor(&[
        "fit",
        "--data",
        p(&path),
        "--n-lexical",
        "0",
        "--n-structural",
        "0",
        "--out",
        "x.json",
    ]);
    assert!(!out.status.success());
}

#[test]
fn skip_flag_drops_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.csv");
    fs::write(
        &path,
        "verb,frame,subject,tense,participant,negraising,acceptability\n\
         think,NP __ that S,first,past,p1,0.5,0.5\n\
         think,NP __ that S,first,past,p2,1.5,0.5\n",
    )
    .unwrap();
    assert!(!negfactor(&["data", "summarize", p(&path)]).status.success());
    let out = ok(&["data", "summarize", "--skip-bad-rows", p(&path)]);
    assert!(out.contains("records:      1"));
    let out = ok(&[
        "data",
        "summarize",
        "--drop-participants",
        "p2",
        "--skip-bad-rows",
        p(&path),
    ]);
    assert!(out.contains("records:      1"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use imprim_core::{fixture_by_name, BundleSpecFile, C64};
use serde_json::Value;

fn imprim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imprim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn imprim_stdin(args: &[&str], input: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_imprim"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn machine(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("machine report is JSON")
}

fn export(dir: &Path, kind: &str, arg: &str) -> (PathBuf, PathBuf) {
    let out = dir.join(format!("{kind}-{arg}"));
    let o = imprim(&["fixture", kind, arg, "n=2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    (out.join("demi.json"), out.join("expected.json"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn valid_file_validates() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, expected) = export(dir.path(), "self", "z2");
    for f in [&demi, &expected] {
        let o = imprim(&["validate", p(f), "--report", "machine"]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(machine(&o)["status"], "pass");
    }
}

#[test]
fn positivity_violation_exits_one_and_names_de6() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, _) = export(dir.path(), "self", "z2");
    let mut s = BundleSpecFile::from_json(&std::fs::read_to_string(&demi).unwrap()).unwrap();
    let d = s.demi_equivalence.as_mut().unwrap();
    for t in d.rip.iter_mut().filter(|t| t.left == t.right) {
        for z in t.data.iter_mut() {
            *z = [-z[0], -z[1]];
        }
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, s.to_json()).unwrap();
    let o = imprim(&["validate", p(&bad), "--report", "machine"]);
    assert_eq!(o.status.code(), Some(1));
    let v = machine(&o);
    let de6 = v["reports"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r["checks"].as_array().unwrap().iter())
        .find(|c| c["label"] == "DE6")
        .expect("DE6 reported")
        .clone();
    assert_eq!(de6["passed"], false);
    assert!(!de6["witnesses"].as_array().unwrap().is_empty());

    let out = dir.path().join("never.json");
    let o = imprim(&["construct", p(&bad), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn truncated_and_empty_input_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, _) = export(dir.path(), "self", "z2");
    let text = std::fs::read_to_string(&demi).unwrap();
    let o = imprim_stdin(&["validate", "-"], &text[..text.len() / 3]);
    assert_eq!(o.status.code(), Some(2));
    let o = imprim_stdin(&["validate", "-"], "");
    assert_eq!(o.status.code(), Some(2));
    let o = imprim(&["validate", p(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = imprim_stdin(&["validate", "-"], &text);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn construct_round_trips_self_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, _) = export(dir.path(), "self", "z3");
    let out = dir.path().join("built.json");
    let o = imprim(&[
        "construct",
        p(&demi),
        "--out",
        p(&out),
        "--report",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let input = BundleSpecFile::from_json(&std::fs::read_to_string(&demi).unwrap()).unwrap();
    assert_eq!(
        machine(&o)["fibre_dims"],
        serde_json::json!(input.fell_bundle.dims)
    );
    let o = imprim(&["validate", p(&out), "--report", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    let v = machine(&o);
    for r in v["reports"].as_array().unwrap() {
        assert!(r["structural"].as_array().unwrap().is_empty());
        assert!(r["checks"]
            .as_array()
            .unwrap()
            .iter()
            .all(|c| c["passed"] == true));
    }
}

#[test]
fn construct_matrix_amplification_dims() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, _) = export(dir.path(), "matrix", "z2");
    let o = imprim(&["construct", p(&demi)]);
    assert_eq!(o.status.code(), Some(0));
    let built = BundleSpecFile::from_json(&stdout(&o)).unwrap();
    let base = built.fell_bundle.dims.clone();
    let dims = built.equivalence.unwrap().fell_bundle.dims;
    assert_eq!(dims, base.iter().map(|d| 4 * d).collect::<Vec<_>>());
}

#[test]
fn compare_identical_constructed_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    let (demi, expected) = export(dir.path(), "kumjian", "pair2");
    let built = dir.path().join("built.json");
    assert_eq!(
        imprim(&["construct", p(&demi), "--out", p(&built)])
            .status
            .code(),
        Some(0)
    );

    let o = imprim(&["compare", p(&expected), p(&expected), "--report", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    let v = machine(&o);
    assert_eq!(v["identity"], true);
    assert_eq!(v["max_residual"].as_f64().unwrap(), 0.0);

    let o = imprim(&["compare", p(&built), p(&expected), "--report", "machine"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(machine(&o)["max_residual"].as_f64().unwrap() < 1e-8);
    let o = imprim(&["compare", p(&built), p(&expected)]);
    assert!(stdout(&o).contains("arrow  omega  dim  solve_residual"));

    let f = fixture_by_name("kumjian", "pair2", 1).unwrap();
    let mut wrong = f.expected.clone();
    for t in wrong.left_inner.iter_mut().flatten() {
        t.scale(C64::new(2.0, 0.0));
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, BundleSpecFile::from_equivalence(&wrong).to_json()).unwrap();
    let o = imprim(&["compare", p(&built), p(&bad)]);
    assert_eq!(o.status.code(), Some(1));

    let o = imprim(&["compare", p(&demi), p(&expected)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn named_fixtures_pass() {
    for words in [
        &["self", "z2"][..],
        &["matrix", "n=2"],
        &["kumjian", "pair2"],
        &["transformation", "m2"],
    ] {
        let mut args = vec!["fixture"];
        args.extend_from_slice(words);
        let o = imprim(&args);
        assert_eq!(o.status.code(), Some(0), "{words:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }
    let o = imprim(&["fixture", "kumjian", "pair2"]);
    assert!(stdout(&o).contains("arrow  constructed_dim  expected_dim  base_map"));
    assert_eq!(imprim(&["fixture", "unknown"]).status.code(), Some(2));
}

#[test]
fn generate_is_seeded_and_valid() {
    let a = imprim(&["generate", "--seed", "11"]);
    let b = imprim(&["generate", "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, imprim(&["generate", "--seed", "12"]).stdout);
    let o = imprim_stdin(&["validate", "-"], &stdout(&a));
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(imprim(&[]).status.code(), Some(2));
    assert_eq!(imprim(&["validate"]).status.code(), Some(2));
    assert_eq!(imprim(&["--help"]).status.code(), Some(0));
}

use std::process::{Command, Output};

use pathgroup::report::{parse_csv, read_ledger};

fn pathgroup(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathgroup"))
        .args(args)
        .current_dir(dir)
        .env_remove("PATHGROUP_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn digest(o: &Output) -> String {
    stdout(o).lines().find_map(|l| l.strip_prefix("sha256 ")).expect("digest line").to_string()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--group", "so3", "--T", "1", "--N", "200", "--M", "1000", "--seed", "7", "--out", "a.bin"];
    let first = pathgroup(&args, dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    let mut again = args;
    again[args.len() - 1] = "b.bin";
    let second = pathgroup(&again, dir.path());
    assert_eq!(digest(&first), digest(&second));
    assert_eq!(std::fs::read(dir.path().join("a.bin")).unwrap(), std::fs::read(dir.path().join("b.bin")).unwrap());

    let (_, paths, d) = pathgroup::flow::read_ensemble(std::fs::File::open(dir.path().join("a.bin")).unwrap()).unwrap();
    assert_eq!(paths.len(), 1000);
    assert_eq!(d, digest(&first));

    let other = pathgroup(&["simulate", "--M", "1000", "--seed", "8", "--out", "c.bin"], dir.path());
    assert_ne!(digest(&first), digest(&other));
}

#[test]
fn seed_default_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env = Command::new(env!("CARGO_BIN_EXE_pathgroup"))
        .args(["simulate", "--M", "10", "--out", "e.bin"])
        .current_dir(dir.path())
        .env("PATHGROUP_SEED", "11")
        .output()
        .unwrap();
    let flag = pathgroup(&["simulate", "--M", "10", "--seed", "11", "--out", "f.bin"], dir.path());
    assert_eq!(digest(&env), digest(&flag));
}

#[test]
fn zero_steps_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = pathgroup(&["simulate", "--group", "so3", "--N", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("invalid time grid"), "{}", stdout(&o));
}

#[test]
fn exact_suite_passes_and_writes_a_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let o = pathgroup(&["verify", "--suite", "exact", "--ledger", "ledger.jsonl", "--out", "run.csv", "--format", "csv"], dir.path());
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("flow.ito_round_trip.left") && text.contains("0 fail"), "{text}");

    let ledger = read_ledger(&dir.path().join("ledger.jsonl")).unwrap();
    assert!(ledger.len() >= 10);
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("run.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), ledger.len());
    for (row, r) in rows.iter().zip(&ledger) {
        assert_eq!(row.identity, r.identity);
        assert_eq!(row.estimate.to_bits(), r.estimate.to_bits());
    }
}

#[test]
fn intertwining_on_the_torus_selects_one_convention() {
    let dir = tempfile::tempdir().unwrap();
    let o = pathgroup(&["verify", "--identity", "intertwining*", "--group", "torus", "--ledger", "l.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = &read_ledger(&dir.path().join("l.jsonl")).unwrap()[0];
    assert_eq!(r.identity, "representations.intertwining");
    assert_eq!(r.details["selected_kappa"], 0.5);
    assert!(r.details["rejected_kappa_error"] > 1e-2);
}

#[test]
fn report_filters_and_handles_empty_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = pathgroup(&["report", "empty.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty());

    let missing = pathgroup(&["report", "nope.jsonl"], dir.path());
    assert_eq!(missing.status.code(), Some(3));

    // A failing negative control mixed into a passing ledger.
    let pass = pathgroup::report::VerificationReport::exact("a.pass", "so3", 0.0, 1.0, 1, 7, serde_json::json!({}));
    let fail = pathgroup::report::VerificationReport::exact("b.fail", "so3", 2.0, 1.0, 1, 7, serde_json::json!({}));
    pathgroup::report::append_ledger(&dir.path().join("mixed.jsonl"), &[pass, fail]).unwrap();
    let o = pathgroup(&["report", "mixed.jsonl", "--verdict", "fail", "--format", "csv"], dir.path());
    let rows = parse_csv(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].identity, "b.fail");
    assert_eq!(rows[0].estimate, 2.0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"steps": 40, "exact_samples": 5, "seed": 3}"#).unwrap();
    let o = pathgroup(&["verify", "--suite", "exact", "--config", "c.json", "--seed", "4", "--ledger", "l.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = &read_ledger(&dir.path().join("l.jsonl")).unwrap()[0];
    assert_eq!(r.seed, 4);
    assert_eq!(r.samples, 5);
    assert_eq!(r.config["steps"], 40);
}

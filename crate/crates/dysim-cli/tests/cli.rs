use dysim_cli::{run_cli, EXIT_ENGINE, EXIT_OK, EXIT_USAGE};
use proptest::prelude::*;
use std::process::Command;

fn dysim(args: &[&str]) -> dysim_cli::Outcome {
    run_cli(std::iter::once("dysim").chain(args.iter().copied()))
}

#[test]
fn guardian_table_as_csv() {
    let o = dysim(&["table", "guardian.bme", "--format", "csv"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let header = o.stdout.lines().next().unwrap();
    assert!(header.starts_with("cansee,\"cases 1,3,4,6\",case 2"), "{header}");
    assert_eq!(o.stdout.lines().count(), 4);
    assert!(o.stdout.contains("{G},√,√,√,√"));
}

#[test]
fn explore_json_reports_every_branch() {
    let o = dysim(&["explore", "--preset", "bme-case3", "--format", "json", "--jobs", "2"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains('β'));
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    let runs = v.as_array().unwrap();
    assert_eq!(runs.len(), 80);
    assert!(runs.iter().all(|r| r["trace"].as_array().is_some_and(|t| !t.is_empty())));
}

#[test]
fn verify_succeeds() {
    let o = dysim(&["verify"]);
    assert_eq!(o.code, EXIT_OK, "{}{}", o.stdout, o.stderr);
    assert!(o.stdout.ends_with("all tables match\n"));
}

#[test]
fn usage_errors_exit_with_2() {
    for args in [&["table", "nope"][..], &["explore"], &["explore", "--preset", "bme-case9"], &["frobnicate"]] {
        let o = dysim(args);
        assert_eq!(o.code, EXIT_USAGE, "{args:?}: {}", o.stdout);
        assert!(!o.stderr.is_empty());
    }
    let o = dysim(&["explore", "--preset", "bme-case1", "--scenario", "x.scn"]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn exhausted_budget_exits_with_3() {
    let o = dysim(&["explore", "--preset", "bme-case1", "--budget", "3"]);
    assert_eq!(o.code, EXIT_ENGINE);
    assert!(o.stderr.contains("budget of 3"), "{}", o.stderr);
}

#[test]
fn scenario_file_with_cansee_override() {
    let text = dysim_core::scenario::preset("sra3p-case4").unwrap().to_text();
    let path = std::env::temp_dir().join(format!("dysim-cli-test-{}.scn", std::process::id()));
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let o = dysim(&["explore", "--scenario", p, "--cansee", "3=all", "--format", "csv"]);
    std::fs::remove_file(&path).ok();
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.lines().count() > 1);
}

#[test]
fn run_follows_the_chosen_branch() {
    let first = dysim(&["run", "--preset", "bme-case1", "--listen-after-step3", "true"]);
    let other = dysim(&["run", "--preset", "bme-case1", "--listen-after-step3", "true", "--choose", "1,1,1"]);
    assert_eq!(first.code, EXIT_OK, "{}", first.stderr);
    assert_eq!(other.code, EXIT_OK, "{}", other.stderr);
    assert_ne!(first.stdout, other.stdout);
    let again = dysim(&["run", "--preset", "bme-case1", "--listen-after-step3", "true", "--choose", "1,1,1"]);
    assert_eq!(other.stdout, again.stdout);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dysim");
    let ok = Command::new(bin).args(["table", "sra3p.case3"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("sra3p.case3"));
    let bad = Command::new(bin).args(["table", "bme.extended.case9"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_arguments_never_panic(args in prop::collection::vec("[-a-z0-9=.,]{0,12}", 0..5)) {
        let o = run_cli(std::iter::once("dysim".to_string()).chain(args));
        prop_assert!([EXIT_OK, 1, EXIT_USAGE, EXIT_ENGINE].contains(&o.code));
    }
}

use dysim_core::scenario::{preset, preset_names, CanSeePolicy, Scenario, ScenarioError, ToggleSetting};
use proptest::prelude::*;
use std::collections::BTreeSet;

const BASE: &str = "protocol = bme
cansee.3 = enumerate

[agent A]
strategy = bme.honest_a
knows = B, S, key:kAS

[agent B]
strategy = bme.honest_b
knows = A, S, key:kBS

[agent S]
strategy = bme.server
knows = A, B, E1, key:kAS, key:kBS, key:kE1S

[agent E1]
strategy = bme.attacker
knows = key:kE1S
honest = A, B, S
";

#[test]
fn a_hand_written_scenario_parses_and_runs() {
    let sc = Scenario::parse(BASE).unwrap();
    assert_eq!(sc.agents.len(), 4);
    let ex = dysim_core::explorer::explore(&sc).unwrap();
    assert!(!ex.runs.is_empty());
}

fn err(src: &str) -> String {
    Scenario::parse(src).unwrap_err().to_string()
}

#[test]
fn unknown_strategy_is_reported() {
    let e = err(&BASE.replace("bme.honest_b", "bme.sleepy"));
    assert!(e.contains("bme.sleepy"), "{e}");
}

#[test]
fn duplicate_agent_is_named() {
    let e = err(&format!("{BASE}\n[agent E1]\nstrategy = bme.attacker\n"));
    assert!(e.contains("E1"), "{e}");
}

#[test]
fn malformed_term_is_reported_with_its_line() {
    let src = BASE.replace("knows = key:kE1S", "knows = enc(key:kE1S");
    match Scenario::parse(&src) {
        Err(ScenarioError::Syntax { line, .. }) => {
            assert_eq!(src.lines().nth(line - 1).unwrap(), "knows = enc(key:kE1S")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn cansee_must_contain_the_eraser() {
    let e = err(&BASE.replace("cansee.3 = enumerate", "cansee.3 = E2 erased-by E1"));
    assert!(e.contains("eraser") && e.contains("E1"), "{e}");
    let ok = BASE.replace("cansee.3 = enumerate", "cansee.3 = E1 erased-by E1");
    assert!(Scenario::parse(&ok).is_ok());
}

#[test]
fn observers_must_be_adversaries() {
    let e = err(&BASE.replace("cansee.3 = enumerate", "cansee.3 = B"));
    assert!(e.contains('B'), "{e}");
}

#[test]
fn unknown_presets_are_rejected() {
    for bad in ["bme-case0", "bme-case7", "sra3p-case1-gE3", "nope", "bme-case1-gE1-x"] {
        assert!(matches!(preset(bad), Err(ScenarioError::UnknownPreset(_))), "{bad}");
    }
}

fn policy() -> impl Strategy<Value = CanSeePolicy> {
    prop_oneof![
        Just(CanSeePolicy::Full),
        Just(CanSeePolicy::Enumerate),
        prop::sample::subsequence(vec!["E1", "E2"], 0..=2)
            .prop_map(|v| CanSeePolicy::Fixed(v.into_iter().map(String::from).collect::<BTreeSet<_>>())),
        prop::sample::select(vec!["E1", "E2"])
            .prop_map(|e| CanSeePolicy::Pinned { observers: [e.to_string()].into(), eraser: e.to_string() }),
    ]
}

fn toggle() -> impl Strategy<Value = ToggleSetting> {
    prop::sample::select(vec![ToggleSetting::On, ToggleSetting::Off, ToggleSetting::Both])
}

proptest! {
    #[test]
    fn text_form_round_trips(
        name in prop::sample::select(preset_names()),
        budget in 1u32..200,
        fake_count in 0u32..4,
        p1 in policy(),
        p3 in policy(),
        listen in toggle(),
        stop in toggle(),
    ) {
        let mut sc = preset(&name).unwrap();
        sc.budget = budget;
        sc.fake_count = fake_count;
        sc.cansee.insert("1".into(), p1);
        sc.cansee.insert("3".into(), p3);
        sc.listen_after_step3 = listen;
        sc.stop_after_first = stop;
        let again = Scenario::parse(&sc.to_text()).unwrap();
        prop_assert_eq!(again, sc);
    }
}

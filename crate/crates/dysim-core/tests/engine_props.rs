use dysim_core::checks::{
    all_branches, bme_behaviour, bme_flags, engine_invariants, exclusive_key, initiative_order_irrelevant, silent,
    some_shared_secret,
};
use dysim_core::engine::World;
use dysim_core::explorer::{explore, with_jobs};
use dysim_core::network::ScriptedChoice;
use dysim_core::scenario::{preset, preset_names, AgentSpec, CanSeePolicy, Scenario};
use dysim_core::strategies::Role;
use dysim_core::term::Term;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn policy() -> impl Strategy<Value = CanSeePolicy> {
    let ids = vec!["E1", "E2", "D"];
    prop_oneof![
        Just(CanSeePolicy::Full),
        Just(CanSeePolicy::Enumerate),
        prop::sample::subsequence(ids, 0..=3)
            .prop_map(|v| CanSeePolicy::Fixed(v.into_iter().map(String::from).collect::<BTreeSet<_>>())),
    ]
}

/// A preset with an extra attacker `D` that pays attention to nobody.
fn with_dummy(name: &str, guardian: bool, knows_keys: bool, p1: CanSeePolicy, p3: CanSeePolicy) -> Scenario {
    let mut sc = preset(name).unwrap();
    let strategy = if guardian { format!("guardian.{}", sc.protocol) } else { format!("{}.attacker", sc.protocol) };
    let mut d = AgentSpec::new("D", &strategy);
    d.role = if guardian { Role::Guardian } else { Role::Attacker };
    if knows_keys {
        d.knows = vec![Term::key("kDS"), Term::agent("A"), Term::agent("B")];
    }
    sc.agents.push(d);
    sc.cansee.insert("1".into(), p1);
    sc.cansee.insert("3".into(), p3);
    sc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dummy_attacker_never_acts(
        name in prop::sample::select(preset_names()),
        guardian in any::<bool>(),
        knows_keys in any::<bool>(),
        p1 in policy(),
        p3 in policy(),
        toggle in 0usize..8,
        script in prop::collection::vec(0usize..6, 0..24),
    ) {
        let sc = with_dummy(&name, guardian, knows_keys, p1, p3);
        prop_assert_eq!(sc.validate(), Ok(()));
        let toggles = sc.toggle_values();
        let t = toggles[toggle % toggles.len()];
        let r = World::new(&sc, &t).unwrap().run(&mut ScriptedChoice { script, pos: 0 }).unwrap();
        prop_assert_eq!(silent(&r, "D"), Ok(()), "{}", r.rendered_trace());
        prop_assert_eq!(engine_invariants(&r), Ok(()));
    }
}

#[test]
fn engine_invariants_hold_on_every_branch_of_every_preset() {
    for name in preset_names() {
        let n = all_branches(&preset(&name).unwrap(), engine_invariants).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(n > 0, "{name}");
    }
}

#[test]
fn bme_attackers_follow_their_rules() {
    for name in preset_names().into_iter().filter(|n| n.starts_with("bme")) {
        all_branches(&preset(&name).unwrap(), bme_behaviour).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn initiator_flags_are_sound() {
    for name in preset_names().into_iter().filter(|n| n.starts_with("bme")) {
        all_branches(&preset(&name).unwrap(), bme_flags).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn initiative_order_does_not_change_bme_outcomes() {
    for name in preset_names().into_iter().filter(|n| n.starts_with("bme")) {
        initiative_order_irrelevant(&name).unwrap();
    }
}

#[test]
fn no_bme_branch_shares_the_used_key() {
    for name in preset_names().into_iter().filter(|n| n.starts_with("bme")) {
        all_branches(&preset(&name).unwrap(), exclusive_key).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn sra3p_case2_can_leave_both_attackers_with_the_secret() {
    assert!(some_shared_secret(&preset("sra3p-case2").unwrap()).unwrap());
}

#[test]
fn exploration_does_not_depend_on_thread_count() {
    for name in ["bme-case3", "sra3p-case2-gE1"] {
        let sc = preset(name).unwrap();
        let one = with_jobs(1, || explore(&sc)).unwrap();
        let many = with_jobs(4, || explore(&sc)).unwrap();
        assert_eq!(one.runs, many.runs, "{name}");
    }
}

use dysim_core::classify::Family::{self, *};
use dysim_core::knowledge::Label;
use dysim_core::report::{golden, verify_table};
use dysim_core::scenario::{preset, preset_names};
use dysim_core::strategies::Role;
use dysim_core::tables::{bme_families, build_table, TABLE_IDS};
use std::collections::BTreeSet;

#[test]
fn every_table_matches_its_fixture() {
    for id in TABLE_IDS {
        assert!(golden(id).is_some(), "no fixture for {id}");
        let t = build_table(id).unwrap_or_else(|e| panic!("{id}: {e}"));
        let d = verify_table(&t).unwrap();
        assert!(d.is_match(), "{}", d.summary());
    }
}

#[test]
fn bme_trace_families_per_case() {
    let expect: [&[Family]; 6] = [&[T1, T2, T3], &[T4], &[T1, T2, T3], &[T1, T2, T3], &[T5], &[T1, T2, T3]];
    for (i, fams) in expect.iter().enumerate() {
        let case = i as u8 + 1;
        let want: BTreeSet<Family> = fams.iter().copied().collect();
        assert_eq!(bme_families(case).unwrap(), want, "case {case}");
    }
}

#[test]
fn unknown_table_is_an_error() {
    assert!(build_table("bme.extended.case7").is_err());
    assert!(golden("nope").is_none());
}

// (label E1 holds for E2, label E2 holds for E1), None meaning "not attentive"
const CASES: [(Option<Label>, Option<Label>); 6] = [
    (Some(Label::Honest), Some(Label::Honest)),
    (Some(Label::Dishonest), Some(Label::Dishonest)),
    (None, None),
    (None, Some(Label::Honest)),
    (None, Some(Label::Dishonest)),
    (None, Some(Label::Unknown)),
];

#[test]
fn presets_encode_the_attacker_relationships() {
    for name in preset_names() {
        let sc = preset(&name).unwrap();
        let case: usize = name.split('-').nth(1).unwrap()[4..].parse().unwrap();
        let (v12, v21) = CASES[case - 1];
        let e1 = sc.agent("E1").unwrap();
        let e2 = sc.agent("E2").unwrap();
        assert_eq!(e1.labels.get("E2").copied(), v12, "{name}");
        assert_eq!(e2.labels.get("E1").copied(), v21, "{name}");
        let base: &[&str] = if sc.protocol == "bme" { &["A", "B", "S"] } else { &["A", "B"] };
        for e in [e1, e2] {
            for b in base {
                assert_eq!(e.labels.get(*b), Some(&Label::Honest), "{name}: {} on {b}", e.id);
            }
        }
        let guardians: Vec<_> = sc.agents.iter().filter(|a| a.role == Role::Guardian).map(|a| a.id.as_str()).collect();
        let expected: Vec<&str> = name.split('-').nth(2).map(|g| vec![&g[1..]]).unwrap_or_default();
        assert_eq!(guardians, expected, "{name}");
    }
}

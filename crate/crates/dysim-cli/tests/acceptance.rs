//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on
//! any failure.

use dysim_core::checks::{
    all_branches, engine_invariants, exclusive_key, initiative_order_irrelevant, silent, some_shared_secret,
};
use dysim_core::classify::Family::{self, *};
use dysim_core::engine::World;
use dysim_core::network::ScriptedChoice;
use dysim_core::report::verify_table;
use dysim_core::scenario::{preset, preset_names, AgentSpec, CanSeePolicy};
use dysim_core::strategies::Role;
use dysim_core::tables::{bme_families, build_table};
use dysim_core::term::{analyze_closure, can_synthesize, normalize, Dataset, Term};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use std::collections::BTreeSet;
use std::process::ExitCode;

type Verdict = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Verdict>);

fn tables_match(ids: &[String]) -> Verdict {
    let mut bad = Vec::new();
    for id in ids {
        match build_table(id) {
            Ok(t) => {
                let d = verify_table(&t).ok_or_else(|| format!("{id}: no fixture"))?;
                if !d.is_match() {
                    bad.push(d.summary());
                }
            }
            Err(e) => bad.push(format!("{id}: {e}")),
        }
    }
    if bad.is_empty() {
        Ok(format!("{} table(s) identical to fixtures", ids.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn bme_trace_families() -> Verdict {
    let t123: &[Family] = &[T1, T2, T3];
    let expect: [&[Family]; 6] = [t123, &[T4], t123, t123, &[T5], t123];
    for (i, want) in expect.iter().enumerate() {
        let case = i as u8 + 1;
        let got = bme_families(case).map_err(|e| e.to_string())?;
        let want: BTreeSet<Family> = want.iter().copied().collect();
        if got != want {
            return Err(format!("case {case}: got {got:?}, expected {want:?}"));
        }
    }
    Ok("cases 1,3,4,6 -> {T1,T2,T3}; case 2 -> {T4}; case 5 -> {T5}".into())
}

fn term() -> impl Strategy<Value = Term> {
    let key = || prop::sample::select(vec!["k1", "k2", "k3"]).prop_map(Term::key);
    let leaf = prop_oneof![
        prop::sample::select(vec!["A", "B"]).prop_map(Term::agent),
        prop::sample::select(vec!["m1", "m2"]).prop_map(Term::payload),
        key(),
    ];
    leaf.prop_recursive(3, 16, 2, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::pair(l, r)),
            (inner.clone(), key()).prop_map(|(b, k)| Term::enc(b, k)),
            (inner, key()).prop_map(|(b, k)| Term::cenc(b, k)),
        ]
    })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::btree_set(term(), 0..5)
}

fn run_prop<S: Strategy>(cases: u32, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
        .run(&s, f)
        .map_err(|e| e.to_string())
}

fn term_properties() -> Verdict {
    run_prop(1000, dataset(), |d| {
        let once = analyze_closure(&d);
        prop_assert_eq!(analyze_closure(&once), once);
        Ok(())
    })
    .map_err(|e| format!("idempotence: {e}"))?;
    run_prop(1000, (dataset(), dataset()), |(d, extra)| {
        let big: Dataset = d.union(&extra).cloned().collect();
        prop_assert!(analyze_closure(&d).is_subset(&analyze_closure(&big)));
        Ok(())
    })
    .map_err(|e| format!("monotonicity: {e}"))?;
    run_prop(1000, (dataset(), any::<bool>()), |(mut d, comm)| {
        let (m, k) = (Term::payload("unseen_m"), Term::key("unseen_k"));
        d.insert(if comm { Term::cenc(m.clone(), k) } else { Term::enc(m.clone(), k) });
        prop_assert!(!can_synthesize(&m, &analyze_closure(&d)));
        Ok(())
    })
    .map_err(|e| format!("non-derivability: {e}"))?;
    let keys = prop::collection::vec(prop::sample::select(vec!["k1", "k2", "k3"]).prop_map(Term::key), 1..=4);
    run_prop(1000, (term(), keys), |(core, keys)| {
        let wrap = |ks: &mut dyn Iterator<Item = &Term>| ks.fold(core.clone(), |acc, k| Term::cenc(acc, k.clone()));
        let n = normalize(&wrap(&mut keys.iter()));
        prop_assert_eq!(&normalize(&wrap(&mut keys.iter().rev())), &n);
        prop_assert_eq!(normalize(&n), n);
        Ok(())
    })
    .map_err(|e| format!("normalization: {e}"))?;
    Ok("4 properties x 1000 cases".into())
}

fn policy() -> impl Strategy<Value = CanSeePolicy> {
    prop_oneof![
        Just(CanSeePolicy::Full),
        Just(CanSeePolicy::Enumerate),
        prop::sample::subsequence(vec!["E1", "E2", "D"], 0..=3)
            .prop_map(|v| CanSeePolicy::Fixed(v.into_iter().map(String::from).collect())),
    ]
}

fn engine_properties() -> Verdict {
    let scenario = (
        prop::sample::select(preset_names()),
        any::<bool>(),
        policy(),
        policy(),
        0usize..4,
        prop::collection::vec(0usize..6, 0..24),
    );
    run_prop(200, scenario, |(name, guardian, p1, p3, toggle, script)| {
        let mut sc = preset(&name).unwrap();
        let mut d = AgentSpec::new("D", &format!("{}.attacker", sc.protocol));
        if guardian {
            d.strategy = format!("guardian.{}", sc.protocol);
            d.role = Role::Guardian;
        }
        sc.agents.push(d);
        sc.cansee.insert("1".into(), p1);
        sc.cansee.insert("3".into(), p3);
        prop_assert_eq!(sc.validate(), Ok(()));
        let tv = sc.toggle_values();
        let r = World::new(&sc, &tv[toggle % tv.len()]).unwrap().run(&mut ScriptedChoice { script, pos: 0 });
        let r = r.map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(silent(&r, "D"), Ok(()));
        Ok(())
    })
    .map_err(|e| format!("dummy attacker: {e}"))?;
    let mut branches = 0;
    for name in preset_names() {
        branches += all_branches(&preset(&name).unwrap(), engine_invariants).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("dummy silent in 200 scenarios; invariants hold on {branches} branches"))
}

fn bme_presets() -> Vec<String> {
    preset_names().into_iter().filter(|n| n.starts_with("bme")).collect()
}

fn initiative_order() -> Verdict {
    let names = bme_presets();
    for n in &names {
        initiative_order_irrelevant(n)?;
    }
    Ok(format!("identical outcome multisets in {} presets", names.len()))
}

fn exclusivity() -> Verdict {
    for n in bme_presets() {
        all_branches(&preset(&n).unwrap(), exclusive_key).map_err(|e| format!("{n}: {e}"))?;
    }
    if !some_shared_secret(&preset("sra3p-case2").unwrap())? {
        return Err("no sra3p case 2 branch leaves both attackers with the secret".into());
    }
    Ok("BME key exclusive on every branch; SRA3P case 2 shares the secret".into())
}

fn main() -> ExitCode {
    let ids = |prefix: &str| (1..=6).map(|c| format!("{prefix}{c}")).collect::<Vec<_>>();
    let criteria: Vec<Criterion> = vec![
        ("BME trace families per case", Box::new(bme_trace_families)),
        ("BME extended tables", Box::new(move || tables_match(&ids("bme.extended.case")))),
        ("guardian BME matrix", Box::new(|| tables_match(&["guardian.bme".into()]))),
        ("SRA3P case tables", Box::new(move || tables_match(&ids("sra3p.case")))),
        ("guardian SRA3P matrix", Box::new(|| tables_match(&["guardian.sra3p".into()]))),
        ("term algebra properties", Box::new(term_properties)),
        ("engine properties", Box::new(engine_properties)),
        ("initiative order irrelevance", Box::new(initiative_order)),
        ("exclusivity / non-exclusivity", Box::new(exclusivity)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("criterion {}: PASS - {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL - {name}: {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

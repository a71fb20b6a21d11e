//! Invariant checkers over finished runs.
//!
//! Each check returns `Err` with a short explanation naming the offending
//! trace index. They are used by the test suites and by `dysim`'s
//! acceptance harness.

use crate::classify::{holders_of_used_key, sra3p_shared_secret, BmeRow, Family};
use crate::engine::RunResult;
use crate::explorer::explore;
use crate::knowledge::Label;
use crate::scenario::{preset, Scenario};
use crate::strategies::AgentFacts;
use crate::tables::bme_run_rows;
use std::collections::{BTreeMap, BTreeSet};

pub type Check = Result<(), String>;

/// No triplet is received after it was erased.
pub fn erase_supremacy(r: &RunResult) -> Check {
    let mut erased = BTreeMap::new();
    for e in &r.trace {
        match e.kind.as_str() {
            "erase" => {
                erased.insert(e.triplet_id, e.index);
            }
            "receive" => {
                if let Some(at) = erased.get(&e.triplet_id) {
                    return Err(format!("#{} received at {} after its erase at {at}", e.triplet_id, e.index));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Every erase records an observer set that contains the eraser.
pub fn eraser_visibility(r: &RunResult) -> Check {
    for e in r.trace.iter().filter(|e| e.kind == "erase") {
        match &e.cansee {
            Some(c) if c.observers.contains(&e.actor) => {}
            Some(c) => return Err(format!("erase at {} by {} with observers {:?}", e.index, e.actor, c.observers)),
            None => return Err(format!("erase at {} by {} has no canSee resolution", e.index, e.actor)),
        }
    }
    Ok(())
}

/// Term sets in every journal only grow.
pub fn journal_monotone(r: &RunResult) -> Check {
    for (id, j) in &r.journals {
        for (i, w) in j.snapshots().windows(2).enumerate() {
            if !w[0].terms.is_subset(&w[1].terms) {
                return Err(format!("{id} lost terms between snapshots {i} and {}", i + 1));
            }
        }
    }
    Ok(())
}

/// Trace indices run 1, 2, ... and every journal has one snapshot per index
/// plus the initial one.
pub fn single_action_indexing(r: &RunResult) -> Check {
    for (i, e) in r.trace.iter().enumerate() {
        if e.index != i as u64 + 1 {
            return Err(format!("event {i} carries index {}", e.index));
        }
    }
    for (id, j) in &r.journals {
        if j.len() != r.trace.len() + 1 {
            return Err(format!("{id} has {} snapshots for {} actions", j.len(), r.trace.len()));
        }
    }
    Ok(())
}

/// An action only changes the terms of its actor, the receiver and the
/// recorded observers.
pub fn locality(r: &RunResult) -> Check {
    for (n, e) in r.trace.iter().enumerate() {
        let mut touched: BTreeSet<&str> = [e.actor.as_str(), e.receiver.as_str()].into();
        if let Some(c) = &e.cansee {
            touched.extend(c.observers.iter().map(String::as_str));
        }
        for (id, j) in &r.journals {
            if touched.contains(id.as_str()) {
                continue;
            }
            let (before, after) = (j.snapshot(n).expect("snapshot"), j.snapshot(n + 1).expect("snapshot"));
            if before.terms != after.terms {
                return Err(format!("{id} learned at index {} without taking part", e.index));
            }
        }
    }
    Ok(())
}

/// `id` never acts and never becomes attentive.
pub fn silent(r: &RunResult, id: &str) -> Check {
    if let Some(e) = r.trace.iter().find(|e| e.actor == id) {
        return Err(format!("{id} acted: {e}"));
    }
    match r.knowledge.get(id) {
        Some(k) if k.is_dummy() => Ok(()),
        Some(_) => Err(format!("{id} became attentive")),
        None => Err(format!("{id} is not in the run")),
    }
}

/// BME attackers only erase competitor requests from agents they label
/// dishonest, and a failed attacker left with an unknown suspect ends up
/// labelling it dishonest.
pub fn bme_behaviour(r: &RunResult) -> Check {
    for e in r.trace.iter().filter(|e| e.kind == "erase" && e.step.starts_with("1_")) {
        let sender = e.sender.actual();
        let Some(j) = r.journals.get(&e.actor) else { continue };
        let before = j.snapshot(e.index as usize - 1).expect("snapshot");
        if before.label_of(sender) != Some(Label::Dishonest) {
            return Err(format!(
                "{} erased the request of {sender} at {} without labelling it dishonest",
                e.actor, e.index
            ));
        }
    }
    for (id, f) in &r.facts {
        let AgentFacts::BmeAttacker(f) = f else { continue };
        if let Some(s) = &f.suspect {
            if f.step3_seen.is_none() && r.knowledge[id].label_of(s) != Some(Label::Dishonest) {
                return Err(format!("{id} failed but still does not condemn {s}"));
            }
        }
    }
    Ok(())
}

/// The initiator's flags agree with the responses that actually reached it.
pub fn bme_flags(r: &RunResult) -> Check {
    let Some((a, af)) = r.facts.iter().find_map(|(id, f)| match f {
        AgentFacts::BmeInitiator(af) => Some((id, af)),
        _ => None,
    }) else {
        return Ok(());
    };
    let step3_at = r.trace.iter().find(|e| e.actor == *a && e.step == "3").map(|e| e.index);
    let heard = r
        .trace
        .iter()
        .filter(|e| e.kind == "receive" && e.receiver == *a && e.step == "2")
        .filter(|e| r.toggles.listen_after_step3 || step3_at.is_none_or(|s| e.index < s))
        .count();
    if af.flags.duplicate_server_response != (heard >= 2) {
        return Err(format!("duplicate flag {} with {heard} responses heard", af.flags.duplicate_server_response));
    }
    let any = r.trace.iter().any(|e| e.kind == "receive" && e.receiver == *a && e.step == "2");
    if af.flags.no_answer_timeout == any {
        return Err(format!("timeout flag {} with answered = {any}", af.flags.no_answer_timeout));
    }
    Ok(())
}

/// All per-run engine invariants at once.
pub fn engine_invariants(r: &RunResult) -> Check {
    erase_supremacy(r)?;
    eraser_visibility(r)?;
    journal_monotone(r)?;
    single_action_indexing(r)?;
    locality(r)
}

/// Explores `sc` and runs `check` on every branch.
pub fn all_branches(sc: &Scenario, check: impl Fn(&RunResult) -> Check) -> Result<usize, String> {
    let ex = explore(sc).map_err(|e| e.to_string())?;
    for (i, r) in ex.runs.iter().enumerate() {
        check(r).map_err(|m| format!("branch {i}: {m}\n{}", r.rendered_trace()))?;
    }
    Ok(ex.runs.len())
}

type RunKey = (Family, String, Vec<(String, BmeRow)>);

fn case_of(name: &str) -> Result<u8, String> {
    name.split('-')
        .nth(1)
        .and_then(|c| c.strip_prefix("case"))
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| format!("`{name}` is not a numbered preset"))
}

/// Outcome of each run of a BME preset, split by which attacker injected first.
pub fn outcomes_by_initiative(name: &str) -> Result<[Vec<RunKey>; 2], String> {
    let case = case_of(name)?;
    let ex = explore(&preset(name).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut out = [Vec::new(), Vec::new()];
    for r in &ex.runs {
        let first = r.trace.iter().find(|e| e.kind == "inject" && e.step.starts_with("1_"));
        let Some(first) = first else {
            return Err(format!("run without an injected request:\n{}", r.rendered_trace()));
        };
        let rows = bme_run_rows(case, r).map_err(|e| e.to_string())?;
        let (family, cansee) = (rows[0].0, rows[0].1.clone());
        let key: RunKey = (family, cansee, rows.into_iter().map(|(_, _, l, row)| (l, row)).collect());
        out[usize::from(first.actor != "E1")].push(key);
    }
    for v in &mut out {
        v.sort();
    }
    Ok(out)
}

/// Both initiative orders yield the same multiset of outcomes.
pub fn initiative_order_irrelevant(name: &str) -> Check {
    let [e1, e2] = outcomes_by_initiative(name)?;
    if e1.is_empty() || e2.is_empty() {
        return Err(format!("{name}: one order never occurs ({} vs {})", e1.len(), e2.len()));
    }
    if e1 != e2 {
        let a: BTreeSet<_> = e1.iter().collect();
        let b: BTreeSet<_> = e2.iter().collect();
        return Err(format!(
            "{name}: {} runs with E1 first, {} with E2 first, {} outcomes only with E1 first, {} only with E2 first",
            e1.len(),
            e2.len(),
            a.difference(&b).count(),
            b.difference(&a).count()
        ));
    }
    Ok(())
}

/// No branch leaves the key A used in the hands of two attackers.
pub fn exclusive_key(r: &RunResult) -> Check {
    let h = holders_of_used_key(r).map_err(|e| e.to_string())?;
    if h.len() > 1 {
        return Err(format!("used key held by {h:?}"));
    }
    Ok(())
}

/// Some branch of `sc` leaves both attackers holding the true secret.
pub fn some_shared_secret(sc: &Scenario) -> Result<bool, String> {
    let ex = explore(sc).map_err(|e| e.to_string())?;
    Ok(ex.runs.iter().any(sra3p_shared_secret))
}

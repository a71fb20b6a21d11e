//! Outcome classification of finished runs.
//!
//! Classifiers take the omniscient view: they read every agent's final
//! facts and knowledge plus the full trace. What each attacker *believes*
//! is derived only from what that attacker observed.

use crate::engine::RunResult;
use crate::knowledge::Label;
use crate::strategies::sra3p::AttackerKind;
use crate::strategies::{bme, AgentFacts, Role};
use crate::term::{AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("run does not fit any known trace family:\n{0}")]
    Unclassified(String),
    #[error("run lacks the expected agents ({0})")]
    MissingAgent(String),
}

/// The five BME trace families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One classified agent row; the string values are the table cells.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BmeRow {
    pub result: String,
    pub belief: String,
    pub key: String,
    pub detection: String,
    pub guardian: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmeOutcome {
    pub family: Family,
    /// Attackers that observed step 3; `None` if step 3 was never sent.
    pub step3_observers: Option<BTreeSet<AgentId>>,
    /// Attackers in the order the server answered their requests.
    pub served: Vec<AgentId>,
    pub rows: BTreeMap<AgentId, BmeRow>,
    /// Whether A ended up protected (flag raised, or no malicious attacker succeeded).
    pub a_flagged: bool,
}

pub(crate) fn adversaries(r: &RunResult) -> Vec<AgentId> {
    r.roles.iter().filter(|(_, role)| role.is_adversarial()).map(|(a, _)| a.clone()).collect()
}

fn initiator_id(r: &RunResult, bme_proto: bool) -> Result<AgentId, ClassifyError> {
    r.facts
        .iter()
        .find(|(_, f)| {
            if bme_proto {
                matches!(f, AgentFacts::BmeInitiator(_))
            } else {
                matches!(f, AgentFacts::Sra3pInitiator(_))
            }
        })
        .map(|(a, _)| a.clone())
        .ok_or_else(|| ClassifyError::MissingAgent("initiator".into()))
}

/// Observers of the triplet carrying `step`, taken from whichever event
/// recorded the canSee decision.
pub fn step_observers(r: &RunResult, step: &str) -> Option<BTreeSet<AgentId>> {
    let sent = r.trace.iter().find(|e| e.step == step && matches!(e.kind.as_str(), "send" | "inject"))?;
    let resolved = r.trace.iter().filter(|e| e.triplet_id == sent.triplet_id).find_map(|e| e.cansee.clone());
    Some(resolved.map(|c| c.observers).unwrap_or_default())
}

fn bme_attacker<'a>(r: &'a RunResult, id: &str) -> Result<&'a bme::AttackerFacts, ClassifyError> {
    match r.facts.get(id) {
        Some(AgentFacts::BmeAttacker(f)) => Ok(f),
        _ => Err(ClassifyError::MissingAgent(id.into())),
    }
}

/// Trace family of a BME run.
pub fn bme_family(r: &RunResult) -> Result<Family, ClassifyError> {
    let a = initiator_id(r, true)?;
    let AgentFacts::BmeInitiator(af) = &r.facts[&a] else { unreachable!() };
    let responses = r.sent_steps("2");
    let step3 = af.step3_sent;
    let inject_erased =
        r.trace.iter().any(|e| e.kind == "erase" && e.step.starts_with("1_") && e.sender.actual() != e.actor);
    Ok(match (responses, step3) {
        (0, false) => Family::T4,
        (1, true) if inject_erased => Family::T5,
        (2, false) if af.flags.duplicate_server_response => Family::T1,
        (_, true) if af.flags.duplicate_server_response => Family::T3,
        (_, true) if responses >= 1 => Family::T2,
        _ => return Err(ClassifyError::Unclassified(r.rendered_trace())),
    })
}

/// Full BME outcome for one run.
pub fn classify_bme(r: &RunResult) -> Result<BmeOutcome, ClassifyError> {
    let family = bme_family(r)?;
    let a = initiator_id(r, true)?;
    let AgentFacts::BmeInitiator(af) = &r.facts[&a] else { unreachable!() };
    let served = r
        .facts
        .values()
        .find_map(|f| match f {
            AgentFacts::BmeServer { served } => Some(served.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let observers = if af.step3_sent { step_observers(r, "3") } else { None };
    let attackers = adversaries(r);
    let flagged = af.flags.any();

    struct Partial {
        key: &'static str,
        success: bool,
        belief: &'static str,
        detection: String,
    }
    let mut partial = BTreeMap::new();
    for e in &attackers {
        let f = bme_attacker(r, e)?;
        let k = &r.knowledge[e];
        let spied = observers.as_ref().is_some_and(|o| o.contains(e));
        let key = match (&af.accepted_key, spied) {
            (_, false) => "none",
            (Some(kk), true) if k.terms.contains(kk) => "right",
            _ => "wrong",
        };
        let success = key == "right" && !flagged;
        let correct = f.erased_competitors.iter().any(|c| k.label_of(c) == Some(Label::Dishonest));
        let detection = if spied {
            if correct {
                "correct understanding"
            } else {
                "none"
            }
        } else if af.step3_sent {
            if f.condemned.is_some() {
                "ε"
            } else if !k.dishonest().is_empty() {
                "δ"
            } else {
                "γ"
            }
        } else if f.responses_seen >= 2 {
            if f.condemned.is_some() {
                "ε"
            } else if f.saw_honest_extra() {
                "α"
            } else {
                "β"
            }
        } else if correct {
            "correct understanding"
        } else {
            "none"
        };
        partial.insert(
            e.clone(),
            Partial { key, success, belief: if spied { "success" } else { "failure" }, detection: detection.into() },
        );
    }

    let broken = attackers.iter().any(|e| r.roles[e] == Role::Attacker && partial[e].success);
    let mut rows = BTreeMap::new();
    for e in &attackers {
        let p = &partial[e];
        let others_fail = attackers.iter().filter(|o| *o != e).all(|o| !partial[o].success);
        rows.insert(
            e.clone(),
            BmeRow {
                result: if p.success { "success" } else { "failure" }.into(),
                belief: p.belief.into(),
                key: p.key.into(),
                detection: p.detection.clone(),
                guardian: if flagged || others_fail { "of help" } else { "no effect" }.into(),
            },
        );
    }
    let a_key = if af.flags.duplicate_server_response {
        "not used"
    } else if af.flags.no_answer_timeout {
        "none"
    } else if broken {
        "broken"
    } else if r.sent_steps("2") >= 2 {
        "used"
    } else {
        "in use"
    };
    let a_detection = if af.flags.duplicate_server_response {
        "2 keys"
    } else if af.flags.no_answer_timeout {
        "no answer: DoS"
    } else {
        "none"
    };
    rows.insert(
        a,
        BmeRow {
            result: if broken { "attacked" } else { "safe" }.into(),
            belief: if flagged { "attack" } else { "safe" }.into(),
            key: a_key.into(),
            detection: a_detection.into(),
            guardian: String::new(),
        },
    );
    Ok(BmeOutcome { family, step3_observers: observers, served, rows, a_flagged: flagged })
}

/// Attackers whose knowledge holds the key A accepted.
pub fn holders_of_used_key(r: &RunResult) -> Result<Vec<AgentId>, ClassifyError> {
    let a = initiator_id(r, true)?;
    let AgentFacts::BmeInitiator(af) = &r.facts[&a] else { unreachable!() };
    Ok(match &af.accepted_key {
        None => vec![],
        Some(k) => adversaries(r).into_iter().filter(|e| r.knowledge[e].terms.contains(k)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sra3pResult {
    FullFailure,
    Failure,
    Uncertainty,
    Success,
    Dominance,
}

impl Sra3pResult {
    pub fn label(self) -> &'static str {
        match self {
            Sra3pResult::FullFailure => "full failure",
            Sra3pResult::Failure => "failure",
            Sra3pResult::Uncertainty => "uncertainty",
            Sra3pResult::Success => "success",
            Sra3pResult::Dominance => "dominance",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sra3pAttackerRow {
    pub attack: String,
    pub detection: String,
    pub messages: String,
    pub result: Sra3pResult,
    pub stopped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sra3pOutcome {
    pub attackers: BTreeMap<AgentId, Sra3pAttackerRow>,
    pub a_aborted: bool,
    /// Attackers that observed A's step 3, if it was sent.
    pub mstar_observers: Option<BTreeSet<AgentId>>,
    /// Attackers in the order they echoed step 1 back to A.
    pub echo_order: Vec<AgentId>,
}

impl Sra3pOutcome {
    pub fn a_result(&self) -> &'static str {
        if self.a_aborted {
            "detection (duplicates)"
        } else {
            "failure"
        }
    }
}

/// Guardian-side reading of an attacker's detection label.
pub fn guardian_detection(attacker_detection: &str) -> &'static str {
    match attacker_detection {
        "(post) uncertainty" => "(post) label",
        "(post ∃) uncertainty" => "post (∃)",
        "(in) trace" | "(in) label" => "(in) label",
        "none (c)" => "none (c)",
        "(post, ∃) failure" => "(post) ∃",
        _ => "none",
    }
}

/// Actual security given the other attacker's result.
pub fn security(other: Sra3pResult, a_aborted: bool) -> &'static str {
    if a_aborted {
        return "enforced";
    }
    match other {
        Sra3pResult::Success | Sra3pResult::Dominance => "compromised",
        Sra3pResult::Uncertainty => "uncertain E",
        Sra3pResult::Failure | Sra3pResult::FullFailure => "restored",
    }
}

pub fn classify_sra3p(r: &RunResult) -> Result<Sra3pOutcome, ClassifyError> {
    let a = initiator_id(r, false)?;
    let AgentFacts::Sra3pInitiator(af) = &r.facts[&a] else { unreachable!() };
    let secret = r
        .knowledge
        .get(&a)
        .and_then(|k| {
            k.terms.iter().find(|t| matches!(t, Term::Atom { tag: crate::term::AtomTag::Payload, .. })).cloned()
        })
        .ok_or_else(|| ClassifyError::MissingAgent("initiator secret".into()))?;
    let attackers = adversaries(r);

    let mut facts = BTreeMap::new();
    for e in &attackers {
        match r.facts.get(e) {
            Some(AgentFacts::Sra3pAttacker(f)) => facts.insert(e.clone(), f),
            _ => return Err(ClassifyError::MissingAgent(e.clone())),
        };
    }

    let mut base = BTreeMap::new();
    for (e, f) in &facts {
        let _ = e;
        let has_m = f.candidates.iter().any(|(m, _)| *m == secret);
        let fakes: Vec<&(Term, _)> = f.candidates.iter().filter(|(m, _)| *m != secret).collect();
        let (messages, result) = match (has_m, fakes.is_empty(), f.candidates.is_empty()) {
            (_, _, true) => ("none", Sra3pResult::Failure),
            (true, true, _) => ("M!", Sra3pResult::Success),
            (true, false, _) => ("M+", Sra3pResult::Uncertainty),
            (false, _, _) => ("M_fake", Sra3pResult::FullFailure),
        };
        base.insert(e.clone(), (messages, result, fakes));
    }
    let mut rows = BTreeMap::new();
    for (e, f) in &facts {
        let (messages, mut result, fakes) = base[e].clone();
        if result == Sra3pResult::Success
            && attackers.iter().filter(|o| *o != e).all(|o| base[o].1 == Sra3pResult::FullFailure)
        {
            result = Sra3pResult::Dominance;
        }
        let initial = f.initial_kind.unwrap_or(AttackerKind::Classical);
        let attack = match (initial, f.switched) {
            (AttackerKind::Classical, true) => "Cl -> Str",
            (AttackerKind::Classical, false) => "Classical",
            (AttackerKind::Strong, _) => "Strong",
            (AttackerKind::Competitive, _) => "Competitive",
        };
        let k = &r.knowledge[e];
        let detection = if f.switched {
            "(in) trace"
        } else if initial == AttackerKind::Strong {
            if f.relabeled_unknown {
                "(in) label"
            } else {
                "none (c)"
            }
        } else if result == Sra3pResult::Uncertainty {
            if fakes.iter().all(|(_, tag)| k.is_attentive(tag.actual())) {
                "(post) uncertainty"
            } else {
                "(post ∃) uncertainty"
            }
        } else if f.candidates.is_empty() && af.aborted {
            "(post, ∃) failure"
        } else {
            "none"
        };
        rows.insert(
            e.clone(),
            Sra3pAttackerRow {
                attack: attack.into(),
                detection: detection.into(),
                messages: messages.into(),
                result,
                stopped: f.stopped,
            },
        );
    }
    let mstar_observers = if af.step3_sent { step_observers(r, "3") } else { None };
    let echo_order =
        r.trace.iter().filter(|e| e.kind == "inject" && e.step.starts_with("2_")).map(|e| e.actor.clone()).fold(
            Vec::new(),
            |mut v, a| {
                if !v.contains(&a) {
                    v.push(a)
                }
                v
            },
        );
    Ok(Sra3pOutcome { attackers: rows, a_aborted: af.aborted, mstar_observers, echo_order })
}

/// Whether both attackers hold the true secret among their candidates.
pub fn sra3p_shared_secret(r: &RunResult) -> bool {
    let Ok(o) = classify_sra3p(r) else { return false };
    o.attackers.len() >= 2 && o.attackers.values().all(|row| matches!(row.messages.as_str(), "M!" | "M+"))
}

/// Sorted display of an id set, as `{E1,E2}`.
pub fn fmt_set(s: &BTreeSet<AgentId>) -> String {
    format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(","))
}

/// Classification attached to a run record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum Outcome {
    Bme(BmeOutcome),
    Sra3p(Sra3pOutcome),
    Unclassified { reason: String },
}

/// Classifies a run of either protocol. Runs with more than two adversarial
/// agents are left unclassified since the detection rules assume two.
pub fn classify_run(protocol: &str, r: &RunResult) -> Outcome {
    let n = adversaries(r).len();
    if n > 2 {
        return Outcome::Unclassified { reason: "unclassified-n>2".into() };
    }
    let res = match protocol {
        "bme" => classify_bme(r).map(Outcome::Bme),
        "sra3p" => classify_sra3p(r).map(Outcome::Sra3p),
        other => return Outcome::Unclassified { reason: format!("unknown protocol `{other}`") },
    };
    res.unwrap_or_else(|e| Outcome::Unclassified { reason: e.to_string() })
}

//! Attacker-side rule checks, applied before a request reaches the handler.
//!
//! Every check looks at the *actual* sender of a triplet; the claimed
//! identity never grants or denies anything.

use crate::knowledge::AgentKnowledge;
use crate::network::{true_sender, ActionRequest, Posted, Triplet};
use crate::term::{AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpyMode {
    #[default]
    Restricted,
    Inflow,
    Outflow,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpyOutcome {
    pub acquired: BTreeSet<Term>,
    pub learned_ids: BTreeSet<AgentId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("{by} cannot synthesize {message}")]
    Unsynthesizable { by: AgentId, message: String },
    #[error("{by} is not attentive to {who}")]
    NotAttentive { by: AgentId, who: AgentId },
    #[error("{0} cannot impersonate itself")]
    SelfImpersonation(AgentId),
}

/// Decides whether an attacker with knowledge `k` may spy `t` in `mode`.
/// canSee membership is checked later by the handler.
pub fn spy_eligible(
    mode: SpyMode,
    t: &Triplet,
    k: &AgentKnowledge,
    of_interest: &dyn Fn(&str) -> bool,
) -> Option<SpyOutcome> {
    let sender = true_sender(t);
    let recv = t.receiver.as_str();
    let learned: BTreeSet<AgentId> = match mode {
        SpyMode::Restricted if k.is_attentive(sender) && k.is_attentive(recv) => BTreeSet::new(),
        SpyMode::Inflow if of_interest(sender) && k.is_attentive(recv) => [sender.to_string()].into(),
        SpyMode::Outflow if k.is_attentive(sender) && of_interest(recv) => [recv.to_string()].into(),
        _ => return None,
    };
    Some(SpyOutcome { acquired: [t.message.clone()].into(), learned_ids: learned })
}

/// Builds a masquerading triplet `by(impersonate) -> to : m`.
pub fn make_injection(
    by: &str,
    impersonate: &str,
    m: &Term,
    to: &str,
    k: &AgentKnowledge,
) -> Result<Triplet, RuleError> {
    if by == impersonate {
        return Err(RuleError::SelfImpersonation(by.into()));
    }
    if !k.knows(m) {
        return Err(RuleError::Unsynthesizable { by: by.into(), message: m.to_string() });
    }
    for who in [impersonate, to] {
        if !k.is_attentive(who) {
            return Err(RuleError::NotAttentive { by: by.into(), who: who.into() });
        }
    }
    Ok(Triplet::masquerading(by, impersonate, m, to))
}

/// Builds an erase request; the true sender must be attentive.
pub fn make_erase_request(by: &str, p: &Posted, k: &AgentKnowledge) -> Result<ActionRequest, RuleError> {
    let sender = true_sender(&p.triplet);
    if !k.is_attentive(sender) {
        return Err(RuleError::NotAttentive { by: by.into(), who: sender.into() });
    }
    Ok(ActionRequest::Erase { by: by.into(), target: p.id })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Label;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }
    fn know(ids: &[&str]) -> AgentKnowledge {
        AgentKnowledge::with([], ids.iter().map(|i| (i.to_string(), Label::Honest)))
    }
    const NONE: &dyn Fn(&str) -> bool = &|_| false;

    #[test]
    fn restricted_spy_on_opening_message() {
        let tr = Triplet::genuine("A", &t("pair(A,B)"), "S");
        let out = spy_eligible(SpyMode::Restricted, &tr, &know(&["A", "S"]), NONE).unwrap();
        assert!(out.acquired.contains(&t("pair(A,B)")) && out.learned_ids.is_empty());
        assert!(spy_eligible(SpyMode::Restricted, &tr, &know(&[]), NONE).is_none());
    }

    #[test]
    fn inflow_learns_sender() {
        let tr = Triplet::masquerading("E2", "B", &t("atom:x"), "A");
        let out = spy_eligible(SpyMode::Inflow, &tr, &know(&["A"]), &|id| id == "E2").unwrap();
        assert_eq!(out.learned_ids, ["E2".to_string()].into());
    }

    #[test]
    fn outflow_learns_receiver() {
        let tr = Triplet::genuine("A", &t("atom:x"), "Z");
        let out = spy_eligible(SpyMode::Outflow, &tr, &know(&["A"]), &|_| true).unwrap();
        assert_eq!(out.learned_ids, ["Z".to_string()].into());
    }

    #[test]
    fn masquerade_does_not_grant_spying() {
        let tr = Triplet::masquerading("E1", "A", &t("pair(A,E1)"), "S");
        assert!(spy_eligible(SpyMode::Restricted, &tr, &know(&["A", "S"]), NONE).is_none());
    }

    #[test]
    fn injection_examples() {
        let k = know(&["A", "S"]).learn_term(&t("E1"));
        let tr = make_injection("E1", "A", &t("pair(A,E1)"), "S", &k).unwrap();
        assert_eq!(tr, Triplet::masquerading("E1", "A", &t("pair(A,E1)"), "S"));
        assert!(make_injection("E1", "A", &t("pair(A,E1)"), "Q", &k).is_err());
        let k2 = know(&["A", "E1"]).learn_term(&t("fake:f"));
        assert!(make_injection("E2", "A", &t("fake:f"), "E1", &k2).is_ok());
    }

    #[test]
    fn erase_requires_attentive_sender() {
        let p = Posted { id: 4, step: "1_1".into(), triplet: Triplet::masquerading("E1", "A", &t("pair(A,E1)"), "S") };
        let k = AgentKnowledge::with([], [("E1".to_string(), Label::Dishonest)]);
        assert_eq!(make_erase_request("E2", &p, &k).unwrap(), ActionRequest::Erase { by: "E2".into(), target: 4 });
        assert!(make_erase_request("E2", &p, &AgentKnowledge::new()).is_err());
        let pa = Posted { id: 5, step: "3".into(), triplet: Triplet::genuine("A", &t("atom:x"), "B") };
        assert!(make_erase_request("E2", &pa, &know(&["A"])).is_ok());
    }
}

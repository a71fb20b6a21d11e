//! The network dataset and the handler that arbitrates between requests.
//!
//! `NetworkState` is the set of in-transit triplets plus the action counter.
//! The handler ([`admissible`], [`collect_and_select`]) ranks candidate actions:
//! attacker requests come first, erasures first among those, then delivery to
//! honest agents, then sends requested by honest agents. Each admissible
//! action is paired with the observer sets the canSee resolution may take.

use crate::knowledge::AgentKnowledge;
use crate::term::{normalize, AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SenderTag {
    Genuine(AgentId),
    Masquerading { actual: AgentId, claimed: AgentId },
}

impl SenderTag {
    pub fn actual(&self) -> &str {
        match self {
            SenderTag::Genuine(a) => a,
            SenderTag::Masquerading { actual, .. } => actual,
        }
    }
    pub fn claimed(&self) -> &str {
        match self {
            SenderTag::Genuine(a) => a,
            SenderTag::Masquerading { claimed, .. } => claimed,
        }
    }
}

impl fmt::Display for SenderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenderTag::Genuine(a) => write!(f, "{a}"),
            SenderTag::Masquerading { actual, claimed } => write!(f, "{actual}({claimed})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub sender: SenderTag,
    pub message: Term,
    pub receiver: AgentId,
}

impl Triplet {
    /// Builds a triplet with a normalized message.
    pub fn new(sender: SenderTag, message: &Term, receiver: impl Into<AgentId>) -> Self {
        Triplet { sender, message: normalize(message), receiver: receiver.into() }
    }
    pub fn genuine(from: &str, message: &Term, to: &str) -> Self {
        Triplet::new(SenderTag::Genuine(from.into()), message, to)
    }
    pub fn masquerading(actual: &str, claimed: &str, message: &Term, to: &str) -> Self {
        Triplet::new(SenderTag::Masquerading { actual: actual.into(), claimed: claimed.into() }, message, to)
    }
}

/// The actual sender of a triplet, whatever identity it claims.
pub fn true_sender(t: &Triplet) -> &str {
    t.sender.actual()
}

pub type TripletId = u32;

/// A triplet as it sits on the network, with its posting id and protocol step label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posted {
    pub id: TripletId,
    pub step: String,
    pub triplet: Triplet,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub index: u64,
    pub in_transit: Vec<Posted>,
    next_id: TripletId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("sender {who} cannot synthesize message {message}")]
    Unsynthesizable { who: AgentId, message: String },
    #[error("triplet #{0} is not in transit")]
    NotInTransit(TripletId),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("deadlock: no request pending and nothing deliverable")]
    Deadlock,
}

impl NetworkState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Posts a triplet on behalf of a sender whose knowledge is `k`.
    /// Returns the successor state and the id of the new triplet.
    pub fn post_message(
        &self,
        t: Triplet,
        step: &str,
        k: &AgentKnowledge,
    ) -> Result<(NetworkState, TripletId), NetworkError> {
        if !k.knows(&t.message) {
            return Err(NetworkError::Unsynthesizable {
                who: t.sender.actual().into(),
                message: t.message.to_string(),
            });
        }
        let mut s = self.clone();
        let id = s.next_id;
        s.next_id += 1;
        s.index += 1;
        s.in_transit.push(Posted { id, step: step.into(), triplet: t });
        Ok((s, id))
    }

    pub fn get(&self, id: TripletId) -> Option<&Posted> {
        self.in_transit.iter().find(|p| p.id == id)
    }

    /// Removes a triplet (delivery or erasure) and advances the index.
    pub fn take(&mut self, id: TripletId) -> Result<Posted, NetworkError> {
        let pos = self.in_transit.iter().position(|p| p.id == id).ok_or(NetworkError::NotInTransit(id))?;
        self.index += 1;
        Ok(self.in_transit.remove(pos))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionRequest {
    Send { by: AgentId, t: Triplet, step: String },
    Inject { by: AgentId, t: Triplet, step: String },
    Erase { by: AgentId, target: TripletId },
    Receive { by: AgentId, target: TripletId },
}

impl ActionRequest {
    pub fn by(&self) -> &str {
        match self {
            ActionRequest::Send { by, .. }
            | ActionRequest::Inject { by, .. }
            | ActionRequest::Erase { by, .. }
            | ActionRequest::Receive { by, .. } => by,
        }
    }
    pub fn kind(&self) -> &'static str {
        match self {
            ActionRequest::Send { .. } => "send",
            ActionRequest::Inject { .. } => "inject",
            ActionRequest::Erase { .. } => "erase",
            ActionRequest::Receive { .. } => "receive",
        }
    }
    pub fn target(&self) -> Option<TripletId> {
        match self {
            ActionRequest::Erase { target, .. } | ActionRequest::Receive { target, .. } => Some(*target),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanSeeResolution {
    pub target: TripletId,
    pub observers: BTreeSet<AgentId>,
}

/// One confirmed network action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    pub actor: AgentId,
    pub kind: String,
    pub step: String,
    pub triplet_id: TripletId,
    pub sender: SenderTag,
    pub message: Term,
    pub receiver: AgentId,
    pub cansee: Option<CanSeeResolution>,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let obs = match &self.cansee {
            Some(r) => format!("{{{}}}", r.observers.iter().cloned().collect::<Vec<_>>().join(",")),
            None => "-".into(),
        };
        write!(
            f,
            "{} | {} | {}({}) | {} | {} | {} | {}",
            self.index, self.actor, self.kind, self.step, self.sender, self.message, self.receiver, obs
        )
    }
}

/// Whether a candidate action was requested by an attacker (including
/// delivery to an attacker) or belongs to honest protocol flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    Attacker,
    HonestDelivery,
    HonestSend,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub request: ActionRequest,
    pub priority: Priority,
}

/// A selected action together with its canSee resolution, if the target is
/// subject to one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub request: ActionRequest,
    pub resolution: Option<CanSeeResolution>,
}

/// Admissible observer sets for an erase served for `eraser` when
/// `spies` were simulating: every subset of `spies` that contains the eraser.
pub fn eraser_observer_sets(spies: &BTreeSet<AgentId>, eraser: &str) -> Vec<BTreeSet<AgentId>> {
    let others: Vec<&AgentId> = spies.iter().filter(|s| s.as_str() != eraser).collect();
    subsets(&others)
        .into_iter()
        .map(|mut s| {
            s.insert(eraser.to_string());
            s
        })
        .collect()
}

/// All subsets of `items`, largest first.
pub fn subsets(items: &[&AgentId]) -> Vec<BTreeSet<AgentId>> {
    let n = items.len();
    let mut out: Vec<BTreeSet<AgentId>> = (0..(1u32 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| items[i].clone()).collect())
        .collect();
    out.sort_by(|a: &BTreeSet<AgentId>, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    out
}

/// Applies the handler's priority discipline and expands each admissible
/// action by its observer-set alternatives. `observer_options` returns `None`
/// for targets that carry no pending canSee decision.
pub fn admissible(
    candidates: &[Candidate],
    observer_options: impl Fn(&ActionRequest) -> Option<Vec<BTreeSet<AgentId>>>,
) -> Result<Vec<Selection>, NetworkError> {
    let tier: Vec<&Candidate> = [Priority::Attacker, Priority::HonestDelivery, Priority::HonestSend]
        .iter()
        .map(|p| candidates.iter().filter(|c| c.priority == *p).collect::<Vec<_>>())
        .find(|v| !v.is_empty())
        .ok_or(NetworkError::Deadlock)?;
    let erases: Vec<&Candidate> =
        tier.iter().copied().filter(|c| matches!(c.request, ActionRequest::Erase { .. })).collect();
    let chosen = if erases.is_empty() { tier } else { erases };
    let mut out = Vec::new();
    for c in chosen {
        match (c.request.target(), observer_options(&c.request)) {
            (Some(target), Some(sets)) => {
                for observers in sets {
                    out.push(Selection {
                        request: c.request.clone(),
                        resolution: Some(CanSeeResolution { target, observers }),
                    });
                }
            }
            _ => out.push(Selection { request: c.request.clone(), resolution: None }),
        }
    }
    Ok(out)
}

/// Picks one admissible selection.
pub trait BranchChooser {
    fn pick(&mut self, options: &[Selection]) -> usize;
}

/// Always takes the first admissible option.
pub struct FirstChoice;

impl BranchChooser for FirstChoice {
    fn pick(&mut self, _options: &[Selection]) -> usize {
        0
    }
}

/// Replays a fixed sequence of option indices, then falls back to 0.
pub struct ScriptedChoice {
    pub script: Vec<usize>,
    pub pos: usize,
}

impl BranchChooser for ScriptedChoice {
    fn pick(&mut self, options: &[Selection]) -> usize {
        let i = self.script.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        i.min(options.len().saturating_sub(1))
    }
}

pub fn collect_and_select(
    candidates: &[Candidate],
    observer_options: impl Fn(&ActionRequest) -> Option<Vec<BTreeSet<AgentId>>>,
    chooser: &mut dyn BranchChooser,
) -> Result<Selection, NetworkError> {
    let opts = admissible(candidates, observer_options)?;
    let i = chooser.pick(&opts);
    Ok(opts[i].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::AgentKnowledge;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn ids(v: &[&str]) -> BTreeSet<AgentId> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn post_increments_index() {
        let k = AgentKnowledge::with([t("A"), t("B")], []);
        let (s, id) = NetworkState::new().post_message(Triplet::genuine("A", &t("pair(A,B)"), "S"), "1", &k).unwrap();
        assert_eq!(s.index, 1);
        assert_eq!(s.get(id).unwrap().triplet.receiver, "S");
    }

    #[test]
    fn injection_posts_masquerading_triplet() {
        let k = AgentKnowledge::with([t("A"), t("E1")], []);
        let tr = Triplet::masquerading("E1", "A", &t("pair(A,E1)"), "S");
        let (s, id) = NetworkState::new().post_message(tr.clone(), "1_1", &k).unwrap();
        assert_eq!(s.get(id).unwrap().triplet, tr);
    }

    #[test]
    fn unsynthesizable_post_rejected() {
        let k = AgentKnowledge::with([t("A")], []);
        let r = NetworkState::new().post_message(Triplet::genuine("A", &t("atom:secret"), "B"), "1", &k);
        assert!(matches!(r, Err(NetworkError::Unsynthesizable { .. })));
    }

    #[test]
    fn true_sender_examples() {
        let m = t("atom:m");
        assert_eq!(true_sender(&Triplet::masquerading("E1", "A", &m, "S")), "E1");
        assert_eq!(true_sender(&Triplet::genuine("A", &m, "S")), "A");
        assert_eq!(true_sender(&Triplet::masquerading("E2", "S", &m, "A")), "E2");
    }

    #[test]
    fn eraser_always_observes() {
        let sets = eraser_observer_sets(&ids(&["E1", "E2"]), "E1");
        assert_eq!(sets, vec![ids(&["E1", "E2"]), ids(&["E1"])]);
        assert!(sets.iter().all(|s| s.contains("E1")));
    }

    #[test]
    fn attacker_priority_and_erase_first() {
        let c = vec![
            Candidate {
                request: ActionRequest::Receive { by: "A".into(), target: 0 },
                priority: Priority::HonestDelivery,
            },
            Candidate {
                request: ActionRequest::Inject {
                    by: "E2".into(),
                    t: Triplet::genuine("E2", &t("atom:x"), "A"),
                    step: "x".into(),
                },
                priority: Priority::Attacker,
            },
            Candidate { request: ActionRequest::Erase { by: "E1".into(), target: 0 }, priority: Priority::Attacker },
        ];
        let sel = admissible(&c, |r| match r {
            ActionRequest::Erase { by, .. } => Some(eraser_observer_sets(&ids(&["E1", "E2"]), by)),
            _ => None,
        })
        .unwrap();
        assert_eq!(sel.len(), 2);
        assert!(sel.iter().all(|s| matches!(s.request, ActionRequest::Erase { .. })));
        assert_eq!(sel[0].resolution.as_ref().unwrap().observers, ids(&["E1", "E2"]));
        let one = collect_and_select(&c, |_| Some(vec![ids(&["E1"])]), &mut FirstChoice).unwrap();
        assert_eq!(one.resolution.unwrap().observers, ids(&["E1"]));
    }

    #[test]
    fn default_delivery_without_requests() {
        let c = vec![Candidate {
            request: ActionRequest::Receive { by: "A".into(), target: 3 },
            priority: Priority::HonestDelivery,
        }];
        let s = collect_and_select(&c, |_| None, &mut FirstChoice).unwrap();
        assert_eq!(s.request, ActionRequest::Receive { by: "A".into(), target: 3 });
    }

    #[test]
    fn deadlock_when_nothing_to_do() {
        assert_eq!(admissible(&[], |_| None), Err(NetworkError::Deadlock));
    }
}

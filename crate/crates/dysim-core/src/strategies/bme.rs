//! Key-distribution protocol through a trusted server.
//!
//! ```text
//! 1. A -> S : A, B
//! 2. S -> A : {k}kAS, {k}kBS
//! 3. A -> B : {k}kBS
//! ```
//!
//! The server mints a fresh `k` per request. Attackers hijack step 1 by
//! replacing `B` with their own name, and then try to be the one whose
//! response A accepts.

use super::{id_list, Ctx, HonestFlags, Params, StrategyError, ToggleValues};
use crate::knowledge::{AgentKnowledge, Label};
use crate::network::{true_sender, ActionRequest, Posted, SenderTag, Triplet, TripletId};
use crate::rules::{make_injection, SpyMode};
use crate::term::{AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

fn server_key(a: &str, s: &str) -> Term {
    Term::key(format!("k{a}{s}"))
}

/// Splits a server response `pair(enc(k, kAS), x)` into `(k, x)`.
fn split_response<'a>(msg: &'a Term, own_key: &Term) -> Option<(&'a Term, &'a Term)> {
    if let Term::Pair(l, r) = msg {
        if let Term::Enc { body, key, comm: false } = l.as_ref() {
            if key.as_ref() == own_key {
                return Some((body, r));
            }
        }
    }
    None
}

fn is_request(msg: &Term) -> Option<(&str, &str)> {
    match msg {
        Term::Pair(l, r) => Some((l.as_agent()?, r.as_agent()?)),
        _ => None,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitiatorFacts {
    pub opened: bool,
    pub responses: Vec<Term>,
    pub accepted_key: Option<Term>,
    pub step3_sent: bool,
    pub aborted: bool,
    pub flags: HonestFlags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Initiator {
    peer: AgentId,
    server: AgentId,
    own_key: Term,
    listen: bool,
    pending3: Option<Term>,
    pub facts: InitiatorFacts,
}

impl Initiator {
    pub(crate) fn new(me: &str, p: &Params, toggles: &ToggleValues) -> Result<Self, StrategyError> {
        let server = p.id("server", "S");
        Ok(Initiator {
            peer: p.id("peer", "B"),
            own_key: p.term("key", server_key(me, &server))?,
            server,
            listen: p.flag("listen_after_step3", toggles.listen_after_step3)?,
            pending3: None,
            facts: InitiatorFacts::default(),
        })
    }

    pub fn requests(&self, ctx: &Ctx) -> Vec<ActionRequest> {
        let mut out = Vec::new();
        if !self.facts.opened {
            let msg = Term::pair(Term::agent(ctx.me), Term::agent(&self.peer));
            out.push(ActionRequest::Send {
                by: ctx.me.into(),
                t: Triplet::genuine(ctx.me, &msg, &self.server),
                step: "1".into(),
            });
        }
        if let (Some(x), false) = (&self.pending3, self.facts.aborted) {
            out.push(ActionRequest::Send {
                by: ctx.me.into(),
                t: Triplet::genuine(ctx.me, x, &self.peer),
                step: "3".into(),
            });
        }
        out
    }

    fn quarantine(&mut self) {
        let keys: Vec<Term> = self.facts.responses.clone();
        self.facts.flags.keys_quarantined.extend(keys);
        self.facts.aborted = true;
        self.pending3 = None;
    }

    pub fn on_receive(&mut self, p: &Posted) {
        let tr = &p.triplet;
        if tr.sender.claimed() != self.server || self.facts.aborted {
            return;
        }
        let Some((k, x)) = split_response(&tr.message, &self.own_key) else {
            self.facts.flags.malformed_response = true;
            self.facts.aborted = true;
            self.pending3 = None;
            return;
        };
        if self.facts.step3_sent && !self.listen {
            return;
        }
        self.facts.responses.push(k.clone());
        if self.facts.accepted_key.is_some() {
            self.facts.flags.duplicate_server_response = true;
            self.quarantine();
        } else {
            self.facts.accepted_key = Some(k.clone());
            self.pending3 = Some(x.clone());
        }
    }

    pub fn on_served(&mut self, req: &ActionRequest) {
        if let ActionRequest::Send { step, .. } = req {
            match step.as_str() {
                "1" => self.facts.opened = true,
                "3" => {
                    self.facts.step3_sent = true;
                    self.pending3 = None;
                }
                _ => {}
            }
        }
    }

    pub fn on_quiescence(&mut self) -> bool {
        if self.facts.opened && self.facts.accepted_key.is_none() && !self.facts.aborted {
            self.facts.flags.no_answer_timeout = true;
            self.facts.aborted = true;
        }
        false
    }
}

/// Trusted server: answers every well-formed request between registered
/// agents (those whose long-term key it holds).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Server {
    /// Pending responses: (requester, requested peer, message).
    queue: Vec<(AgentId, AgentId, Term)>,
    minted: u32,
    pub served: Vec<AgentId>,
}

impl Server {
    pub fn on_receive(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, p: &Posted) {
        let Some((a, x)) = is_request(&p.triplet.message) else { return };
        let (ka, kx) = (server_key(a, ctx.me), server_key(x, ctx.me));
        if !k.terms.contains(&ka) || !k.terms.contains(&kx) {
            return;
        }
        self.minted += 1;
        let fresh = Term::key(ctx.fresh_label(self.minted));
        k.absorb(&fresh);
        let msg = Term::pair(Term::enc(fresh.clone(), ka), Term::enc(fresh, kx));
        self.queue.push((a.to_string(), x.to_string(), msg));
    }

    pub fn requests(&self, ctx: &Ctx) -> Vec<ActionRequest> {
        self.queue
            .iter()
            .map(|(a, _, msg)| ActionRequest::Send {
                by: ctx.me.into(),
                t: Triplet::genuine(ctx.me, msg, a),
                step: "2".into(),
            })
            .collect()
    }

    pub fn on_served(&mut self, req: &ActionRequest) {
        if let ActionRequest::Send { t, .. } = req {
            if let Some(i) = self.queue.iter().position(|(a, _, m)| *m == t.message && *a == t.receiver) {
                let (_, x, _) = self.queue.remove(i);
                self.served.push(x);
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerFacts {
    pub opening_seen: bool,
    pub injected: u32,
    pub replays: u32,
    pub responses_seen: u32,
    pub own_response_key: Option<Term>,
    /// Competitor requests spied: (true sender, label held at that moment).
    pub competitor_requests: Vec<(AgentId, Option<Label>)>,
    pub erased_competitors: BTreeSet<AgentId>,
    pub suspect: Option<AgentId>,
    pub condemned: Option<AgentId>,
    pub step3_seen: Option<Term>,
}

impl AttackerFacts {
    /// Saw a request from someone it regards as honest.
    pub fn saw_honest_extra(&self) -> bool {
        self.competitor_requests.iter().any(|(_, l)| *l == Some(Label::Honest))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attacker {
    initiator: AgentId,
    server: AgentId,
    own_key: Term,
    pub(crate) spy: SpyMode,
    pub(crate) interest: BTreeSet<AgentId>,
    inject_pending: bool,
    /// Erase intents: target id to the competitor it belongs to, if any.
    erase: BTreeMap<TripletId, Option<AgentId>>,
    last_replay_terms: Option<usize>,
    pub facts: AttackerFacts,
}

impl Attacker {
    pub(crate) fn new(me: &str, p: &Params) -> Result<Self, StrategyError> {
        let server = p.id("server", "S");
        let spy = match p.get("spy") {
            None | Some("restricted") => SpyMode::Restricted,
            Some("inflow") => SpyMode::Inflow,
            Some("outflow") => SpyMode::Outflow,
            Some(o) => {
                return Err(StrategyError::BadParam {
                    strategy: "bme.attacker".into(),
                    key: "spy".into(),
                    msg: o.into(),
                })
            }
        };
        Ok(Attacker {
            initiator: p.id("initiator", "A"),
            own_key: p.term("key", server_key(me, &server))?,
            server,
            spy,
            interest: id_list(p.get("interest")),
            inject_pending: false,
            erase: BTreeMap::new(),
            last_replay_terms: None,
            facts: AttackerFacts::default(),
        })
    }

    pub fn on_spy(&mut self, k: &mut AgentKnowledge, p: &Posted, confirmed: bool) {
        let tr = &p.triplet;
        let sender = true_sender(tr).to_string();
        let genuine_initiator = tr.sender == SenderTag::Genuine(self.initiator.clone());

        if tr.receiver == self.server {
            let Some((a, _)) = is_request(&tr.message) else { return };
            if a != self.initiator {
                return;
            }
            if genuine_initiator {
                self.erase.insert(p.id, None);
                if confirmed && !self.facts.opening_seen {
                    self.facts.opening_seen = true;
                    self.inject_pending = true;
                }
                return;
            }
            let label = k.label_of(&sender);
            match label {
                Some(Label::Dishonest) => {
                    self.erase.insert(p.id, Some(sender.clone()));
                }
                Some(Label::Unknown) if confirmed => self.facts.suspect = Some(sender.clone()),
                _ => {}
            }
            if confirmed {
                self.facts.competitor_requests.push((sender, label));
            }
            return;
        }

        if tr.sender.claimed() == self.server && tr.receiver == self.initiator {
            if confirmed && matches!(tr.message, Term::Pair(..)) {
                self.facts.responses_seen += 1;
                if let Term::Pair(_, r) = &tr.message {
                    if let Term::Enc { body, key, comm: false } = r.as_ref() {
                        if **key == self.own_key && k.terms.contains(body) {
                            self.facts.own_response_key = Some((**body).clone());
                        }
                    }
                }
            }
            return;
        }

        if genuine_initiator && matches!(tr.message, Term::Enc { comm: false, .. }) {
            self.erase.insert(p.id, None);
            if confirmed {
                self.facts.step3_seen = Some(tr.message.clone());
            }
        }
    }

    pub fn requests(&self, ctx: &Ctx, k: &AgentKnowledge) -> Vec<ActionRequest> {
        let mut out: Vec<ActionRequest> =
            self.erase.keys().map(|id| ActionRequest::Erase { by: ctx.me.into(), target: *id }).collect();
        if self.inject_pending {
            let msg = Term::pair(Term::agent(&self.initiator), Term::agent(ctx.me));
            if let Ok(t) = make_injection(ctx.me, &self.initiator, &msg, &self.server, k) {
                let step = if self.facts.injected == 0 { format!("1_{}", ctx.me) } else { format!("1_{}+", ctx.me) };
                out.push(ActionRequest::Inject { by: ctx.me.into(), t, step });
            }
        }
        out
    }

    pub fn on_served(&mut self, req: &ActionRequest) {
        match req {
            ActionRequest::Inject { .. } => {
                self.inject_pending = false;
                self.facts.injected += 1;
            }
            ActionRequest::Erase { target, .. } => {
                if let Some(Some(who)) = self.erase.remove(target) {
                    self.facts.erased_competitors.insert(who);
                }
            }
            _ => {}
        }
    }

    /// Stale erase intents (target already gone) are dropped by the engine.
    pub fn forget_target(&mut self, id: TripletId) {
        self.erase.remove(&id);
    }

    /// Replays its request when it injected but never got anything for it
    /// and has learned something since the last attempt.
    pub fn on_quiescence(&mut self, k: &AgentKnowledge) -> bool {
        let f = &self.facts;
        if f.injected > 0
            && f.own_response_key.is_none()
            && f.step3_seen.is_none()
            && !self.inject_pending
            && self.last_replay_terms != Some(k.terms.len())
        {
            self.last_replay_terms = Some(k.terms.len());
            self.inject_pending = true;
            self.facts.replays += 1;
            return true;
        }
        false
    }

    pub fn finish(&mut self, k: &mut AgentKnowledge) {
        if self.facts.step3_seen.is_none() {
            if let Some(s) = self.facts.suspect.clone() {
                k.set_label(&s, Label::Dishonest);
                self.facts.condemned = Some(s);
            }
        }
    }
}

//! Three-pass protocol over a commutative cipher.
//!
//! ```text
//! 1. A -> B : {M}KA
//! 2. B -> A : {{M}KA}KB
//! 3. A -> B : {M}KB
//! ```
//!
//! The classical attack echoes step 1 back to A as if it were B's reply, so A
//! strips its own layer and sends `M` in clear. With two attackers the echo
//! becomes a race, and a strong attacker answers a competitor's echo with a
//! fake secret sent under A's name.

use super::{fake_atom, id_list, Ctx, HonestFlags, Params, StrategyError, ToggleValues};
use crate::knowledge::{AgentKnowledge, Label};
use crate::network::{true_sender, ActionRequest, Posted, SenderTag, Triplet, TripletId};
use crate::rules::{make_injection, SpyMode};
use crate::term::{peel_comm_layers, AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackerKind {
    Classical,
    Strong,
    Competitive,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitiatorFacts {
    pub opened: bool,
    pub responses: u32,
    pub step3_sent: bool,
    pub aborted: bool,
    pub flags: HonestFlags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Initiator {
    peer: AgentId,
    secret: Term,
    key: Term,
    pending3: Option<Term>,
    pub facts: InitiatorFacts,
}

impl Initiator {
    pub(crate) fn new(me: &str, p: &Params) -> Result<Self, StrategyError> {
        Ok(Initiator {
            peer: p.id("peer", "B"),
            secret: p.term("secret", Term::payload("M"))?,
            key: p.term("key", Term::key(format!("K{me}")))?,
            pending3: None,
            facts: InitiatorFacts::default(),
        })
    }

    pub fn requests(&self, ctx: &Ctx) -> Vec<ActionRequest> {
        let mut out = Vec::new();
        if !self.facts.opened {
            let m = Term::cenc(self.secret.clone(), self.key.clone());
            out.push(ActionRequest::Send {
                by: ctx.me.into(),
                t: Triplet::genuine(ctx.me, &m, &self.peer),
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

    pub fn on_receive(&mut self, _k: &mut AgentKnowledge, p: &Posted) {
        let tr = &p.triplet;
        if tr.sender.claimed() != self.peer || !self.facts.opened || self.facts.aborted {
            return;
        }
        let Some(x) = peel_comm_layers(&tr.message, |k| *k == self.key).into_iter().next() else {
            self.facts.flags.malformed_response = true;
            self.facts.aborted = true;
            self.pending3 = None;
            return;
        };
        self.facts.responses += 1;
        if self.facts.responses > 1 {
            self.facts.flags.duplicate_step2 = true;
            if !self.facts.step3_sent {
                self.facts.aborted = true;
                self.pending3 = None;
            }
            return;
        }
        self.pending3 = Some(x);
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
}

/// Honest responder: adds its layer once, and removes it from step 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Responder {
    initiator: AgentId,
    key: Term,
    reply: Option<Term>,
    replied: bool,
}

impl Responder {
    pub(crate) fn new(me: &str, p: &Params) -> Result<Self, StrategyError> {
        Ok(Responder {
            initiator: p.id("initiator", "A"),
            key: p.term("key", Term::key(format!("K{me}")))?,
            reply: None,
            replied: false,
        })
    }

    pub fn requests(&self, ctx: &Ctx) -> Vec<ActionRequest> {
        self.reply
            .iter()
            .map(|m| ActionRequest::Send {
                by: ctx.me.into(),
                t: Triplet::genuine(ctx.me, m, &self.initiator),
                step: "2".into(),
            })
            .collect()
    }

    pub fn on_receive(&mut self, k: &mut AgentKnowledge, p: &Posted) {
        let tr = &p.triplet;
        if tr.sender.claimed() != self.initiator || !tr.message.is_comm_enc() {
            return;
        }
        if !self.replied && self.reply.is_none() {
            self.reply = Some(Term::cenc(tr.message.clone(), self.key.clone()));
        } else {
            for inner in peel_comm_layers(&tr.message, |x| *x == self.key) {
                k.absorb(&inner);
            }
        }
    }

    pub fn on_served(&mut self, req: &ActionRequest) {
        if matches!(req, ActionRequest::Send { .. }) {
            self.reply = None;
            self.replied = true;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerFacts {
    pub initial_kind: Option<AttackerKind>,
    pub kind: Option<AttackerKind>,
    pub opening_seen: bool,
    pub echoed: bool,
    pub trace_seen: bool,
    pub traced: Vec<AgentId>,
    pub switched: bool,
    pub relabeled_unknown: bool,
    pub stopped: bool,
    /// Candidate values for the secret with the tag they arrived under.
    pub candidates: Vec<(Term, SenderTag)>,
    pub fakes_sent: Vec<(AgentId, Term)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attacker {
    initiator: AgentId,
    peer: AgentId,
    requested_kind: Option<AttackerKind>,
    kind: AttackerKind,
    stop_after_first: bool,
    fake_count: u32,
    pub(crate) interest: BTreeSet<AgentId>,
    opening: Option<Term>,
    echo_pending: bool,
    ready: bool,
    erase: BTreeSet<TripletId>,
    fake_targets: BTreeSet<AgentId>,
    pending_fakes: Vec<(AgentId, Term)>,
    own_fakes: BTreeSet<Term>,
    minted: u32,
    pub facts: AttackerFacts,
}

impl Attacker {
    pub(crate) fn new(_me: &str, p: &Params, malicious: bool, toggles: &ToggleValues) -> Result<Self, StrategyError> {
        let bad = |msg: String| StrategyError::BadParam { strategy: "sra3p.attacker".into(), key: "kind".into(), msg };
        let requested_kind = match p.get("kind") {
            None | Some("auto") => None,
            Some("classical") => Some(AttackerKind::Classical),
            Some("strong") => Some(AttackerKind::Strong),
            Some("competitive") => Some(AttackerKind::Competitive),
            Some(o) => return Err(bad(o.to_string())),
        };
        let fake_count = match p.get("fake_count") {
            Some(s) => s.parse().map_err(|_| StrategyError::BadParam {
                strategy: "sra3p.attacker".into(),
                key: "fake_count".into(),
                msg: s.into(),
            })?,
            None => toggles.fake_count.max(1),
        };
        Ok(Attacker {
            initiator: p.id("initiator", "A"),
            peer: p.id("peer", "B"),
            requested_kind,
            kind: requested_kind.unwrap_or(AttackerKind::Classical),
            stop_after_first: malicious && p.flag("stop_after_first", toggles.stop_after_first)?,
            fake_count,
            interest: id_list(p.get("interest")),
            opening: None,
            echo_pending: false,
            ready: false,
            erase: BTreeSet::new(),
            fake_targets: BTreeSet::new(),
            pending_fakes: Vec::new(),
            own_fakes: BTreeSet::new(),
            minted: 0,
            facts: AttackerFacts::default(),
        })
    }

    /// Fixes the initial attack kind from the starting beliefs: anyone
    /// already regarded as dishonest or unknown calls for the strong attack.
    pub fn init(&mut self, k: &AgentKnowledge) {
        let wary = k
            .labels()
            .iter()
            .any(|(id, l)| *id != self.initiator && *id != self.peer && matches!(l, Label::Dishonest | Label::Unknown));
        self.kind = self.requested_kind.unwrap_or(if wary { AttackerKind::Strong } else { AttackerKind::Classical });
        self.facts.initial_kind = Some(self.kind);
        self.facts.kind = Some(self.kind);
    }

    pub fn spy_mode(&self) -> Option<SpyMode> {
        (!self.facts.stopped).then_some(SpyMode::Restricted)
    }

    fn listening(&self) -> bool {
        !self.facts.stopped && self.opening.is_some() && (self.facts.echoed || self.facts.trace_seen)
    }

    fn add_candidate(&mut self, m: &Term, tag: SenderTag) {
        if self.own_fakes.contains(m) || self.facts.stopped {
            return;
        }
        self.facts.candidates.push((m.clone(), tag));
        if self.kind == AttackerKind::Classical && self.stop_after_first {
            self.facts.stopped = true;
            self.erase.clear();
        }
    }

    fn schedule_fakes(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, target: &str) {
        if !self.fake_targets.insert(target.to_string()) {
            return;
        }
        for _ in 0..self.fake_count {
            self.minted += 1;
            let f = fake_atom(ctx.fresh_label(self.minted));
            k.absorb(&f);
            self.own_fakes.insert(f.clone());
            self.pending_fakes.push((target.to_string(), f));
        }
    }

    fn handle_trace(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, y: &str) {
        self.facts.trace_seen = true;
        self.facts.traced.push(y.to_string());
        if !self.facts.echoed {
            self.echo_pending = false;
            self.ready = true;
        }
        match self.kind {
            AttackerKind::Classical => {
                self.kind = AttackerKind::Strong;
                self.facts.switched = true;
                k.set_label(y, Label::Dishonest);
                self.schedule_fakes(ctx, k, y);
            }
            AttackerKind::Strong => {
                if k.label_of(y) == Some(Label::Unknown) {
                    self.facts.relabeled_unknown = true;
                }
                k.set_label(y, Label::Dishonest);
                self.schedule_fakes(ctx, k, y);
            }
            AttackerKind::Competitive => {
                let peer = self.peer.clone();
                self.schedule_fakes(ctx, k, &peer);
            }
        }
        self.facts.kind = Some(self.kind);
    }

    pub fn on_spy(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, p: &Posted, confirmed: bool) {
        let tr = &p.triplet;
        let actual = true_sender(tr).to_string();
        if actual == ctx.me {
            return;
        }
        let genuine_initiator = tr.sender == SenderTag::Genuine(self.initiator.clone());

        if self.opening.is_none() {
            if genuine_initiator && tr.receiver == self.peer && tr.message.is_comm_enc() {
                self.erase.insert(p.id);
                if confirmed {
                    self.opening = Some(tr.message.clone());
                    self.facts.opening_seen = true;
                    if self.kind == AttackerKind::Classical {
                        self.echo_pending = true;
                    }
                }
            }
            return;
        }

        if tr.receiver == self.initiator && Some(&tr.message) == self.opening.as_ref() {
            if self.facts.echoed {
                self.erase.insert(p.id);
            }
            if confirmed {
                self.handle_trace(ctx, k, &actual);
            }
            return;
        }

        if tr.sender.claimed() == self.initiator && tr.receiver == self.peer && self.listening() {
            self.erase.insert(p.id);
            if confirmed {
                self.add_candidate(&tr.message, tr.sender.clone());
            }
        }
    }

    pub fn on_receive(&mut self, p: &Posted) {
        let tr = &p.triplet;
        if tr.sender.claimed() == self.initiator && matches!(tr.message, Term::Atom { .. }) {
            self.add_candidate(&tr.message, tr.sender.clone());
        }
    }

    pub fn requests(&self, ctx: &Ctx, k: &AgentKnowledge) -> Vec<ActionRequest> {
        let mut out = Vec::new();
        if !self.facts.stopped {
            out.extend(self.erase.iter().map(|id| ActionRequest::Erase { by: ctx.me.into(), target: *id }));
        }
        if let (true, false, Some(m)) = (self.echo_pending, self.facts.echoed, &self.opening) {
            if let Ok(t) = make_injection(ctx.me, &self.peer, m, &self.initiator, k) {
                out.push(ActionRequest::Inject { by: ctx.me.into(), t, step: format!("2_{}", ctx.me) });
            }
        }
        for (target, f) in &self.pending_fakes {
            if let Ok(t) = make_injection(ctx.me, &self.initiator, f, target, k) {
                out.push(ActionRequest::Inject { by: ctx.me.into(), t, step: format!("3'_{}", ctx.me) });
            }
        }
        out
    }

    pub fn on_served(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, req: &ActionRequest, _posted: Option<&Posted>) {
        match req {
            ActionRequest::Inject { step, .. } if step.starts_with("2_") => {
                self.facts.echoed = true;
                self.echo_pending = false;
                match self.kind {
                    AttackerKind::Strong => {
                        let targets: Vec<AgentId> = k
                            .dishonest()
                            .into_iter()
                            .filter(|d| *d != self.initiator && *d != self.peer && d != ctx.me)
                            .collect();
                        for d in targets {
                            self.schedule_fakes(ctx, k, &d);
                        }
                    }
                    AttackerKind::Competitive => {
                        let peer = self.peer.clone();
                        self.schedule_fakes(ctx, k, &peer);
                    }
                    AttackerKind::Classical => {}
                }
            }
            ActionRequest::Inject { t, .. } => {
                if let Some(i) = self.pending_fakes.iter().position(|(to, f)| *to == t.receiver && *f == t.message) {
                    let sent = self.pending_fakes.remove(i);
                    self.facts.fakes_sent.push(sent);
                }
            }
            ActionRequest::Erase { target, .. } => {
                self.erase.remove(target);
            }
            _ => {}
        }
    }

    pub fn forget_target(&mut self, id: TripletId) {
        self.erase.remove(&id);
    }

    /// Strong and competitive attackers hold their echo until the network
    /// falls silent, unless a competitor's echo showed up first.
    pub fn on_quiescence(&mut self) -> bool {
        if self.kind != AttackerKind::Classical && self.opening.is_some() && !self.facts.echoed && !self.ready {
            self.ready = true;
            self.echo_pending = true;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;
    use std::collections::BTreeMap;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }
    fn ctx(me: &str) -> Ctx<'_> {
        Ctx { me, fresh_ns: "fresh" }
    }
    fn posted(id: TripletId, tr: Triplet) -> Posted {
        Posted { id, step: "x".into(), triplet: tr }
    }
    fn attacker(labels: &[(&str, Label)], stop: bool) -> (Attacker, AgentKnowledge) {
        let p = BTreeMap::new();
        let tog = ToggleValues { stop_after_first: stop, ..Default::default() };
        let mut a = Attacker::new("E1", &Params { strategy: "sra3p.attacker", map: &p }, true, &tog).unwrap();
        let mut all = vec![("A".to_string(), Label::Honest), ("B".to_string(), Label::Honest)];
        all.extend(labels.iter().map(|(i, l)| (i.to_string(), *l)));
        let k = AgentKnowledge::with([], all);
        a.init(&k);
        (a, k)
    }

    #[test]
    fn initiator_strips_own_layer() {
        let p = BTreeMap::new();
        let mut a = Initiator::new("A", &Params { strategy: "sra3p.honest_a", map: &p }).unwrap();
        let open = a.requests(&ctx("A")).remove(0);
        a.on_served(&open);
        let mut k = AgentKnowledge::new();
        a.on_receive(&mut k, &posted(1, Triplet::genuine("B", &t("cenc(cenc(atom:M,key:KA),key:KB)"), "A")));
        let ActionRequest::Send { t: tr, step, .. } = a.requests(&ctx("A")).remove(0) else { panic!() };
        assert_eq!(step, "3");
        assert_eq!(tr.message, t("cenc(atom:M,key:KB)"));
    }

    #[test]
    fn echoed_opening_reveals_secret() {
        let p = BTreeMap::new();
        let mut a = Initiator::new("A", &Params { strategy: "sra3p.honest_a", map: &p }).unwrap();
        let open = a.requests(&ctx("A")).remove(0);
        a.on_served(&open);
        let mut k = AgentKnowledge::new();
        a.on_receive(&mut k, &posted(1, Triplet::masquerading("E1", "B", &t("cenc(atom:M,key:KA)"), "A")));
        let ActionRequest::Send { t: tr, .. } = a.requests(&ctx("A")).remove(0) else { panic!() };
        assert_eq!(tr.message, t("atom:M"));
    }

    #[test]
    fn kind_follows_initial_beliefs() {
        assert_eq!(attacker(&[("E2", Label::Honest)], false).0.kind, AttackerKind::Classical);
        assert_eq!(attacker(&[("E2", Label::Unknown)], false).0.kind, AttackerKind::Strong);
        assert_eq!(attacker(&[], false).0.kind, AttackerKind::Classical);
    }

    #[test]
    fn classical_switches_on_competitor_echo() {
        let (mut e, mut k) = attacker(&[("E2", Label::Honest)], false);
        let open = posted(0, Triplet::genuine("A", &t("cenc(atom:M,key:KA)"), "B"));
        k.absorb(&open.triplet.message);
        e.on_spy(&ctx("E1"), &mut k, &open, true);
        assert!(e
            .requests(&ctx("E1"), &k)
            .iter()
            .any(|r| matches!(r, ActionRequest::Inject { step, .. } if step == "2_E1")));
        let echo = posted(1, Triplet::masquerading("E2", "B", &t("cenc(atom:M,key:KA)"), "A"));
        e.on_spy(&ctx("E1"), &mut k, &echo, true);
        assert!(e.facts.switched);
        assert_eq!(k.label_of("E2"), Some(Label::Dishonest));
        let reqs = e.requests(&ctx("E1"), &k);
        assert!(!reqs.iter().any(|r| matches!(r, ActionRequest::Inject { step, .. } if step == "2_E1")));
        assert!(reqs
            .iter()
            .any(|r| matches!(r, ActionRequest::Inject { t, .. } if t.receiver == "E2" && t.sender.claimed() == "A")));
    }

    #[test]
    fn classical_stops_after_first_candidate() {
        let (mut e, mut k) = attacker(&[], true);
        k.absorb(&t("cenc(atom:M,key:KA)"));
        e.on_spy(&ctx("E1"), &mut k, &posted(0, Triplet::genuine("A", &t("cenc(atom:M,key:KA)"), "B")), true);
        let echo = e.requests(&ctx("E1"), &k).into_iter().find(|r| matches!(r, ActionRequest::Inject { .. })).unwrap();
        e.on_served(&ctx("E1"), &mut k, &echo, None);
        e.on_spy(&ctx("E1"), &mut k, &posted(3, Triplet::genuine("A", &t("atom:M"), "B")), true);
        assert!(e.facts.stopped);
        assert_eq!(e.spy_mode(), None);
        assert_eq!(e.facts.candidates.len(), 1);
    }
}

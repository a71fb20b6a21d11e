//! Executable agent programs.
//!
//! Every agent runs one [`Program`]: a deterministic reaction function over
//! its own observations. The engine calls the hooks below and re-checks every
//! request against the agent's knowledge before posting it. All
//! nondeterminism lives in the handler's branch points, never in here.

pub mod bme;
pub mod sra3p;

use crate::knowledge::AgentKnowledge;
use crate::network::{ActionRequest, Posted};
use crate::rules::SpyMode;
use crate::term::{parse_term, AgentId, AtomTag, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Names accepted in scenario files.
pub const STRATEGY_NAMES: &[&str] = &[
    "bme.honest_a",
    "bme.honest_b",
    "bme.server",
    "bme.attacker",
    "sra3p.honest_a",
    "sra3p.honest_b",
    "sra3p.attacker",
    "guardian.bme",
    "guardian.sra3p",
    "passive",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Honest,
    Attacker,
    Guardian,
}

impl Role {
    /// Attackers and guardians both act under the attacker rules.
    pub fn is_adversarial(self) -> bool {
        !matches!(self, Role::Honest)
    }
}

/// Per-run context handed to every hook.
#[derive(Clone, Debug)]
pub struct Ctx<'a> {
    pub me: &'a str,
    pub fresh_ns: &'a str,
}

impl Ctx<'_> {
    /// Deterministic fresh label `<ns>:<agent>:<n>`.
    pub fn fresh_label(&self, n: u32) -> String {
        format!("{}:{}:{}", self.fresh_ns, self.me, n)
    }
}

/// Flags honest agents raise; once raised they stay raised.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestFlags {
    pub duplicate_server_response: bool,
    pub no_answer_timeout: bool,
    pub duplicate_step2: bool,
    pub malformed_response: bool,
    pub keys_quarantined: std::collections::BTreeSet<Term>,
}

impl HonestFlags {
    pub fn any(&self) -> bool {
        self.duplicate_server_response || self.no_answer_timeout || self.duplicate_step2 || self.malformed_response
    }
}

/// Run-end summary each program exposes to the classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "program", rename_all = "snake_case")]
pub enum AgentFacts {
    BmeInitiator(bme::InitiatorFacts),
    BmeServer { served: Vec<AgentId> },
    BmeAttacker(bme::AttackerFacts),
    Sra3pInitiator(sra3p::InitiatorFacts),
    Sra3pAttacker(sra3p::AttackerFacts),
    Passive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Program {
    BmeInitiator(bme::Initiator),
    BmeServer(bme::Server),
    BmeAttacker(bme::Attacker),
    Sra3pInitiator(sra3p::Initiator),
    Sra3pResponder(sra3p::Responder),
    Sra3pAttacker(sra3p::Attacker),
    Passive,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("unknown strategy `{0}`")]
    Unknown(String),
    #[error("strategy `{strategy}`: bad parameter `{key}`: {msg}")]
    BadParam { strategy: String, key: String, msg: String },
}

/// Run-wide switches the explorer may fan out over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleValues {
    pub listen_after_step3: bool,
    pub stop_after_first: bool,
    pub fake_count: u32,
}

pub(crate) struct Params<'a> {
    strategy: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn err(&self, key: &str, msg: impl Into<String>) -> StrategyError {
        StrategyError::BadParam { strategy: self.strategy.into(), key: key.into(), msg: msg.into() }
    }
    pub(crate) fn id(&self, key: &str, default: &str) -> AgentId {
        self.map.get(key).cloned().unwrap_or_else(|| default.to_string())
    }
    pub(crate) fn term(&self, key: &str, default: Term) -> Result<Term, StrategyError> {
        match self.map.get(key) {
            Some(s) => parse_term(s).map_err(|e| self.err(key, e.to_string())),
            None => Ok(default),
        }
    }
    pub(crate) fn flag(&self, key: &str, default: bool) -> Result<bool, StrategyError> {
        match self.map.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(o) => Err(self.err(key, format!("expected true|false, got `{o}`"))),
        }
    }
    pub(crate) fn get(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(String::as_str)
    }
}

impl Program {
    /// Instantiates a strategy by name. `role` tells whether toggles meant for
    /// malicious attackers apply.
    pub fn build(
        name: &str,
        me: &str,
        params: &BTreeMap<String, String>,
        role: Role,
        toggles: &ToggleValues,
    ) -> Result<Program, StrategyError> {
        let p = Params { strategy: name, map: params };
        Ok(match name {
            "bme.honest_a" => Program::BmeInitiator(bme::Initiator::new(me, &p, toggles)?),
            "bme.server" => Program::BmeServer(bme::Server::default()),
            "bme.honest_b" | "passive" => Program::Passive,
            "bme.attacker" | "guardian.bme" => Program::BmeAttacker(bme::Attacker::new(me, &p)?),
            "sra3p.honest_a" => Program::Sra3pInitiator(sra3p::Initiator::new(me, &p)?),
            "sra3p.honest_b" => Program::Sra3pResponder(sra3p::Responder::new(me, &p)?),
            "sra3p.attacker" | "guardian.sra3p" => {
                Program::Sra3pAttacker(sra3p::Attacker::new(me, &p, role == Role::Attacker, toggles)?)
            }
            other => return Err(StrategyError::Unknown(other.into())),
        })
    }

    /// Default role implied by a strategy name.
    pub fn default_role(name: &str) -> Role {
        if name.starts_with("guardian.") {
            Role::Guardian
        } else if name.ends_with(".attacker") {
            Role::Attacker
        } else {
            Role::Honest
        }
    }

    /// One-time setup once the agent's initial knowledge is in place.
    pub fn init(&mut self, k: &AgentKnowledge) {
        if let Program::Sra3pAttacker(a) = self {
            a.init(k)
        }
    }

    /// The triplet left the network; pending intents about it are void.
    pub fn forget_target(&mut self, id: crate::network::TripletId) {
        match self {
            Program::BmeAttacker(a) => a.forget_target(id),
            Program::Sra3pAttacker(a) => a.forget_target(id),
            _ => {}
        }
    }

    /// Spy mode in force, or `None` when the agent is not listening.
    pub fn spy_mode(&self) -> Option<SpyMode> {
        match self {
            Program::BmeAttacker(a) => Some(a.spy),
            Program::Sra3pAttacker(a) => a.spy_mode(),
            _ => None,
        }
    }

    pub fn of_interest(&self, id: &str) -> bool {
        match self {
            Program::BmeAttacker(a) => a.interest.contains(id),
            Program::Sra3pAttacker(a) => a.interest.contains(id),
            _ => false,
        }
    }

    pub fn requests(&self, ctx: &Ctx, k: &AgentKnowledge) -> Vec<ActionRequest> {
        match self {
            Program::BmeInitiator(a) => a.requests(ctx),
            Program::BmeServer(s) => s.requests(ctx),
            Program::BmeAttacker(a) => a.requests(ctx, k),
            Program::Sra3pInitiator(a) => a.requests(ctx),
            Program::Sra3pResponder(b) => b.requests(ctx),
            Program::Sra3pAttacker(a) => a.requests(ctx, k),
            Program::Passive => vec![],
        }
    }

    /// A triplet was spied. `confirmed` is false while the canSee decision is
    /// pending; in that state only erase intentions may be formed, and `k` is
    /// a scratch copy that will be discarded.
    pub fn on_spy(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, p: &Posted, confirmed: bool) {
        match self {
            Program::BmeAttacker(a) => a.on_spy(k, p, confirmed),
            Program::Sra3pAttacker(a) => a.on_spy(ctx, k, p, confirmed),
            _ => {}
        }
    }

    pub fn on_receive(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, p: &Posted) {
        match self {
            Program::BmeInitiator(a) => a.on_receive(p),
            Program::BmeServer(s) => s.on_receive(ctx, k, p),
            Program::Sra3pInitiator(a) => a.on_receive(k, p),
            Program::Sra3pResponder(b) => b.on_receive(k, p),
            Program::Sra3pAttacker(a) => a.on_receive(p),
            _ => {}
        }
    }

    pub fn on_served(&mut self, ctx: &Ctx, k: &mut AgentKnowledge, req: &ActionRequest, posted: Option<&Posted>) {
        match self {
            Program::BmeInitiator(a) => a.on_served(req),
            Program::BmeServer(s) => s.on_served(req),
            Program::BmeAttacker(a) => a.on_served(req),
            Program::Sra3pInitiator(a) => a.on_served(req),
            Program::Sra3pResponder(b) => b.on_served(req),
            Program::Sra3pAttacker(a) => a.on_served(ctx, k, req, posted),
            Program::Passive => {}
        }
    }

    /// Called when nothing else can happen. Returns true if the agent now
    /// has something new to request.
    pub fn on_quiescence(&mut self, k: &AgentKnowledge) -> bool {
        match self {
            Program::BmeInitiator(a) => a.on_quiescence(),
            Program::BmeAttacker(a) => a.on_quiescence(k),
            Program::Sra3pAttacker(a) => a.on_quiescence(),
            _ => false,
        }
    }

    /// Run epilogue (belief updates that need no network action).
    pub fn finish(&mut self, k: &mut AgentKnowledge) {
        if let Program::BmeAttacker(a) = self {
            a.finish(k)
        }
    }

    pub fn facts(&self) -> AgentFacts {
        match self {
            Program::BmeInitiator(a) => AgentFacts::BmeInitiator(a.facts.clone()),
            Program::BmeServer(s) => AgentFacts::BmeServer { served: s.served.clone() },
            Program::BmeAttacker(a) => AgentFacts::BmeAttacker(a.facts.clone()),
            Program::Sra3pInitiator(a) => AgentFacts::Sra3pInitiator(a.facts.clone()),
            Program::Sra3pResponder(_) | Program::Passive => AgentFacts::Passive,
            Program::Sra3pAttacker(a) => AgentFacts::Sra3pAttacker(a.facts.clone()),
        }
    }
}

/// Parses a comma-separated id list parameter.
pub(crate) fn id_list(s: Option<&str>) -> std::collections::BTreeSet<AgentId> {
    s.map(|s| s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()).unwrap_or_default()
}

pub(crate) fn fake_atom(label: String) -> Term {
    Term::atom(label, AtomTag::Fake)
}

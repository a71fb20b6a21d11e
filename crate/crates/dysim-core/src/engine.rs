//! The world: agents, the network, and one step of the handler at a time.
//!
//! [`World::options`] lists every admissible next action (already expanded
//! by canSee alternatives) and [`World::apply`] performs one of them. The
//! explorer drives these two calls; [`World::run`] drives them with a
//! [`BranchChooser`] for single runs.

use crate::knowledge::{AgentKnowledge, KnowledgeJournal, Label};
use crate::network::{
    admissible, eraser_observer_sets, subsets, true_sender, ActionRequest, BranchChooser, CanSeeResolution, Candidate,
    NetworkError, NetworkState, Posted, Priority, Selection, SenderTag, TraceEvent, TripletId,
};
use crate::rules::{make_erase_request, spy_eligible};
use crate::scenario::{CanSeePolicy, Scenario};
use crate::strategies::{AgentFacts, Ctx, Program, Role, StrategyError, ToggleValues};
use crate::term::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Upper bound on consecutive quiescence rounds without a network action.
const MAX_QUIET_ROUNDS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("action budget of {0} exceeded")]
    BudgetExceeded(u32),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{agent}: {msg}")]
    Contract { agent: AgentId, msg: String },
    #[error("strategy error: {0}")]
    Strategy(String),
    #[error("quiescence loop: agents keep waking up without acting")]
    QuiescenceLoop,
}

impl From<StrategyError> for EngineError {
    fn from(e: StrategyError) -> Self {
        EngineError::Strategy(e.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub program: Program,
    pub knowledge: AgentKnowledge,
    pub journal: KnowledgeJournal,
}

/// Everything the classifiers need from a finished run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub toggles: ToggleValues,
    pub trace: Vec<TraceEvent>,
    pub facts: BTreeMap<AgentId, AgentFacts>,
    pub roles: BTreeMap<AgentId, Role>,
    pub knowledge: BTreeMap<AgentId, AgentKnowledge>,
    /// Triplets still in transit when the run ended.
    pub leftover: usize,
    /// Branch points resolved along the way.
    pub choices: Vec<Choice>,
    /// Per-agent knowledge snapshots, one per network index.
    pub journals: BTreeMap<AgentId, KnowledgeJournal>,
}

impl RunResult {
    pub fn rendered_trace(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Observers recorded for the triplet with this step label, if any.
    pub fn observers_of_step(&self, step: &str) -> Option<&BTreeSet<AgentId>> {
        self.trace.iter().filter(|e| e.step == step).find_map(|e| e.cansee.as_ref().map(|r| &r.observers))
    }

    pub fn sent_steps(&self, step: &str) -> usize {
        self.trace.iter().filter(|e| e.step == step && matches!(e.kind.as_str(), "send" | "inject")).count()
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub agents: Vec<AgentState>,
    pub net: NetworkState,
    pub trace: Vec<TraceEvent>,
    cansee: BTreeMap<String, CanSeePolicy>,
    /// Observers fixed when the triplet was posted.
    committed: BTreeMap<TripletId, BTreeSet<AgentId>>,
    /// Spies holding an unconfirmed sighting of an enumerated triplet.
    sightings: BTreeMap<TripletId, BTreeSet<AgentId>>,
    toggles: ToggleValues,
    budget: u32,
    actions: u32,
    quiet_rounds: u32,
    fresh_ns: String,
    finished: bool,
    choices: Vec<Choice>,
}

/// A branch point that was resolved during a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    /// Network index at which the branch was taken.
    pub index: u64,
    pub picked: usize,
    pub of: usize,
    pub action: String,
}

fn describe(sel: &Selection) -> String {
    let r = &sel.request;
    let what = match r {
        ActionRequest::Send { step, .. } | ActionRequest::Inject { step, .. } => {
            format!("{} {}({step})", r.by(), r.kind())
        }
        ActionRequest::Erase { target, .. } | ActionRequest::Receive { target, .. } => {
            format!("{} {} #{target}", r.by(), r.kind())
        }
    };
    match &sel.resolution {
        Some(res) => format!("{what} cansee={{{}}}", res.observers.iter().cloned().collect::<Vec<_>>().join(",")),
        None => what,
    }
}

impl World {
    pub fn new(sc: &Scenario, toggles: &ToggleValues) -> Result<World, EngineError> {
        let mut agents = Vec::new();
        for spec in &sc.agents {
            let knowledge = spec.initial_knowledge();
            let mut program = Program::build(&spec.strategy, &spec.id, &spec.params, spec.role, toggles)?;
            program.init(&knowledge);
            agents.push(AgentState {
                id: spec.id.clone(),
                role: spec.role,
                program,
                journal: KnowledgeJournal::new(knowledge.clone()),
                knowledge,
            });
        }
        agents.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(World {
            agents,
            net: NetworkState::new(),
            trace: vec![],
            cansee: sc.cansee.clone(),
            committed: BTreeMap::new(),
            sightings: BTreeMap::new(),
            toggles: *toggles,
            budget: sc.budget,
            actions: 0,
            quiet_rounds: 0,
            fresh_ns: sc.fresh_ns.clone(),
            finished: false,
            choices: Vec::new(),
        })
    }

    fn idx(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn agent(&self, id: &str) -> Option<&AgentState> {
        self.idx(id).map(|i| &self.agents[i])
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn sighters(&self, id: TripletId) -> BTreeSet<AgentId> {
        let mut s = self.committed.get(&id).cloned().unwrap_or_default();
        s.extend(self.sightings.get(&id).cloned().unwrap_or_default());
        s
    }

    fn check_request(&self, a: &AgentState, req: &ActionRequest) -> Result<Option<Priority>, EngineError> {
        let contract = |msg: String| EngineError::Contract { agent: a.id.clone(), msg };
        if req.by() != a.id {
            return Err(contract(format!("request filed on behalf of {}", req.by())));
        }
        let tier = if a.role.is_adversarial() { Priority::Attacker } else { Priority::HonestSend };
        match req {
            ActionRequest::Send { t, .. } => {
                if t.sender != SenderTag::Genuine(a.id.clone()) {
                    return Err(contract("send must carry the sender's own identity".into()));
                }
                if !a.knowledge.knows(&t.message) {
                    return Err(contract(format!("cannot synthesize {}", t.message)));
                }
            }
            ActionRequest::Inject { t, .. } => {
                if !a.role.is_adversarial() {
                    return Err(contract("only attackers inject".into()));
                }
                if true_sender(t) != a.id || t.sender.claimed() == a.id {
                    return Err(contract("inject must masquerade as someone else".into()));
                }
                if !a.knowledge.knows(&t.message) {
                    return Err(contract(format!("cannot synthesize {}", t.message)));
                }
            }
            ActionRequest::Erase { target, .. } => {
                if !a.role.is_adversarial() {
                    return Err(contract("only attackers erase".into()));
                }
                let Some(p) = self.net.get(*target) else { return Ok(None) };
                if !self.sighters(*target).contains(&a.id) || make_erase_request(&a.id, p, &a.knowledge).is_err() {
                    return Ok(None);
                }
            }
            ActionRequest::Receive { .. } => return Err(contract("receives are scheduled by the handler".into())),
        }
        Ok(Some(tier))
    }

    fn candidates(&self) -> Result<Vec<Candidate>, EngineError> {
        let mut out = Vec::new();
        for a in &self.agents {
            let ctx = Ctx { me: &a.id, fresh_ns: &self.fresh_ns };
            for req in a.program.requests(&ctx, &a.knowledge) {
                if let Some(priority) = self.check_request(a, &req)? {
                    out.push(Candidate { request: req, priority });
                }
            }
        }
        let earliest_to = |adversarial: bool| {
            self.net
                .in_transit
                .iter()
                .find(|p| self.agent(&p.triplet.receiver).is_some_and(|r| r.role.is_adversarial() == adversarial))
        };
        if let Some(p) = earliest_to(true) {
            out.push(Candidate {
                request: ActionRequest::Receive { by: p.triplet.receiver.clone(), target: p.id },
                priority: Priority::Attacker,
            });
        }
        if let Some(p) = earliest_to(false) {
            out.push(Candidate {
                request: ActionRequest::Receive { by: p.triplet.receiver.clone(), target: p.id },
                priority: Priority::HonestDelivery,
            });
        }
        Ok(out)
    }

    fn still_spying<'a>(&self, ids: &'a BTreeSet<AgentId>) -> Vec<&'a AgentId> {
        ids.iter().filter(|i| self.agent(i).is_some_and(|a| a.program.spy_mode().is_some())).collect()
    }

    /// Every admissible next action. Empty once the network is quiet.
    pub fn options(&self) -> Result<Vec<Selection>, EngineError> {
        if self.finished {
            return Ok(vec![]);
        }
        let cands = self.candidates()?;
        if cands.is_empty() {
            return Ok(vec![]);
        }
        let opts = admissible(&cands, |req| {
            let target = req.target()?;
            let pending = self.sightings.get(&target)?;
            let spying: BTreeSet<AgentId> = self.still_spying(pending).into_iter().cloned().collect();
            let step = &self.net.get(target)?.step;
            Some(match req {
                ActionRequest::Erase { by, .. } if matches!(self.policy(step), CanSeePolicy::Pinned { eraser, .. } if eraser == by) =>
                {
                    let CanSeePolicy::Pinned { observers, .. } = self.policy(step) else { unreachable!() };
                    let mut allowed = spying;
                    allowed.insert(by.clone());
                    vec![observers.intersection(&allowed).cloned().collect()]
                }
                ActionRequest::Erase { by, .. } => {
                    let mut with_eraser = spying;
                    with_eraser.insert(by.clone());
                    eraser_observer_sets(&with_eraser, by)
                }
                _ => subsets(&spying.iter().collect::<Vec<_>>()),
            })
        })?;
        Ok(opts)
    }

    fn policy(&self, step: &str) -> &CanSeePolicy {
        self.cansee.get(step).unwrap_or(&CanSeePolicy::Full)
    }

    fn eligible_spies(&self, p: &Posted) -> Vec<(usize, BTreeSet<AgentId>)> {
        let actual = true_sender(&p.triplet);
        let mut out = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !a.role.is_adversarial() || a.id == actual || a.id == p.triplet.receiver {
                continue;
            }
            let Some(mode) = a.program.spy_mode() else { continue };
            let interest = |id: &str| a.program.of_interest(id);
            if let Some(outcome) = spy_eligible(mode, &p.triplet, &a.knowledge, &interest) {
                out.push((i, outcome.learned_ids));
            }
        }
        out
    }

    fn ctx_parts(&self, i: usize) -> (String, String) {
        (self.agents[i].id.clone(), self.fresh_ns.clone())
    }

    /// Confirms a sighting: the spy learns the message and reacts.
    fn confirm_spy(&mut self, i: usize, p: &Posted, learned: &BTreeSet<AgentId>) {
        let (me, ns) = self.ctx_parts(i);
        let a = &mut self.agents[i];
        a.knowledge.absorb(&p.triplet.message);
        for id in learned {
            if !a.knowledge.is_attentive(id) {
                a.knowledge.set_label(id, Label::Unknown);
            }
        }
        a.program.on_spy(&Ctx { me: &me, fresh_ns: &ns }, &mut a.knowledge, p, true);
    }

    fn post(&mut self, req: &ActionRequest) -> Result<Option<CanSeeResolution>, EngineError> {
        let (by, t, step) = match req {
            ActionRequest::Send { by, t, step } | ActionRequest::Inject { by, t, step } => (by, t, step),
            _ => unreachable!("post is only called for sends and injects"),
        };
        let i = self.idx(by).expect("request from a known agent");
        let (net, id) = self.net.post_message(t.clone(), step, &self.agents[i].knowledge)?;
        self.net = net;
        let posted = self.net.get(id).expect("just posted").clone();
        {
            let (me, ns) = self.ctx_parts(i);
            let a = &mut self.agents[i];
            a.program.on_served(&Ctx { me: &me, fresh_ns: &ns }, &mut a.knowledge, req, Some(&posted));
        }
        let spies = self.eligible_spies(&posted);
        match self.policy(step).clone() {
            CanSeePolicy::Enumerate | CanSeePolicy::Pinned { .. } => {
                let mut pending = BTreeSet::new();
                for (si, _) in &spies {
                    let (me, ns) = self.ctx_parts(*si);
                    let a = &mut self.agents[*si];
                    let mut scratch = a.knowledge.learn_term(&posted.triplet.message);
                    a.program.on_spy(&Ctx { me: &me, fresh_ns: &ns }, &mut scratch, &posted, false);
                    pending.insert(me);
                }
                if !pending.is_empty() {
                    self.sightings.insert(id, pending);
                }
                Ok(None)
            }
            pol => {
                let mut observers = BTreeSet::new();
                for (si, learned) in &spies {
                    if let CanSeePolicy::Fixed(set) = &pol {
                        if !set.contains(&self.agents[*si].id) {
                            continue;
                        }
                    }
                    self.confirm_spy(*si, &posted, learned);
                    observers.insert(self.agents[*si].id.clone());
                }
                self.committed.insert(id, observers.clone());
                Ok(Some(CanSeeResolution { target: id, observers }))
            }
        }
    }

    fn resolve(&mut self, p: &Posted, res: &Option<CanSeeResolution>) {
        if let Some(r) = res {
            let spies = self.eligible_spies(p);
            for who in &r.observers {
                let Some(i) = self.idx(who) else { continue };
                let learned = spies.iter().find(|(si, _)| *si == i).map(|(_, l)| l.clone()).unwrap_or_default();
                self.confirm_spy(i, p, &learned);
            }
        }
        self.sightings.remove(&p.id);
    }

    /// Applies option `i` of `opts`, recording the branch if there was one.
    pub fn choose(&mut self, opts: &[Selection], i: usize) -> Result<(), EngineError> {
        if opts.len() > 1 {
            self.choices.push(Choice { index: self.net.index, picked: i, of: opts.len(), action: describe(&opts[i]) });
        }
        self.apply(&opts[i])
    }

    /// Performs one selected action.
    pub fn apply(&mut self, sel: &Selection) -> Result<(), EngineError> {
        self.actions += 1;
        if self.actions > self.budget {
            return Err(EngineError::BudgetExceeded(self.budget));
        }
        self.quiet_rounds = 0;
        let req = &sel.request;
        let (posted, cansee) = match req {
            ActionRequest::Send { .. } | ActionRequest::Inject { .. } => {
                let res = self.post(req)?;
                let id = res.as_ref().map(|r| r.target).unwrap_or(self.net.in_transit.last().expect("posted").id);
                (self.net.get(id).expect("posted").clone(), res)
            }
            ActionRequest::Erase { by, target } | ActionRequest::Receive { by, target } => {
                let p = self.net.take(*target)?;
                let i = self
                    .idx(by)
                    .ok_or_else(|| EngineError::Contract { agent: by.clone(), msg: "unknown agent".into() })?;
                // an erase by a committed observer keeps the committed set
                let mut res = sel.resolution.clone();
                if res.is_none() {
                    if let Some(obs) = self.committed.get(target) {
                        if matches!(req, ActionRequest::Erase { .. }) {
                            res = Some(CanSeeResolution { target: *target, observers: obs.clone() });
                        }
                    }
                }
                self.resolve(&p, &sel.resolution);
                let (me, ns) = self.ctx_parts(i);
                let a = &mut self.agents[i];
                a.knowledge.absorb(&p.triplet.message);
                let ctx = Ctx { me: &me, fresh_ns: &ns };
                if matches!(req, ActionRequest::Receive { .. }) {
                    a.program.on_receive(&ctx, &mut a.knowledge, &p);
                } else {
                    a.program.on_served(&ctx, &mut a.knowledge, req, Some(&p));
                }
                for a in &mut self.agents {
                    a.program.forget_target(*target);
                }
                (p, res)
            }
        };
        self.trace.push(TraceEvent {
            index: self.net.index,
            actor: req.by().to_string(),
            kind: req.kind().to_string(),
            step: posted.step.clone(),
            triplet_id: posted.id,
            sender: posted.triplet.sender.clone(),
            message: posted.triplet.message.clone(),
            receiver: posted.triplet.receiver.clone(),
            cansee,
        });
        for a in &mut self.agents {
            a.journal.commit(a.knowledge.clone());
        }
        Ok(())
    }

    /// Called when no action is admissible. Attackers get the first chance to
    /// wake up, then honest agents. Returns false when the run is over.
    pub fn quiesce(&mut self) -> Result<bool, EngineError> {
        if self.finished {
            return Ok(false);
        }
        self.quiet_rounds += 1;
        if self.quiet_rounds > MAX_QUIET_ROUNDS {
            return Err(EngineError::QuiescenceLoop);
        }
        for adversarial in [true, false] {
            let mut woke = false;
            for a in self.agents.iter_mut().filter(|a| a.role.is_adversarial() == adversarial) {
                woke |= a.program.on_quiescence(&a.knowledge);
            }
            if woke {
                return Ok(true);
            }
        }
        self.finish();
        Ok(false)
    }

    fn finish(&mut self) {
        for a in &mut self.agents {
            a.program.finish(&mut a.knowledge);
        }
        self.finished = true;
    }

    /// Advances until the run ends, resolving branches with `chooser`.
    pub fn run(mut self, chooser: &mut dyn BranchChooser) -> Result<RunResult, EngineError> {
        loop {
            let opts = self.options()?;
            if opts.is_empty() {
                if self.quiesce()? {
                    continue;
                }
                return Ok(self.result());
            }
            let i = if opts.len() == 1 { 0 } else { chooser.pick(&opts) };
            self.choose(&opts, i)?;
        }
    }

    pub fn result(&self) -> RunResult {
        RunResult {
            toggles: self.toggles,
            trace: self.trace.clone(),
            facts: self.agents.iter().map(|a| (a.id.clone(), a.program.facts())).collect(),
            roles: self.agents.iter().map(|a| (a.id.clone(), a.role)).collect(),
            knowledge: self.agents.iter().map(|a| (a.id.clone(), a.knowledge.clone())).collect(),
            leftover: self.net.in_transit.len(),
            choices: self.choices.clone(),
            journals: self.agents.iter().map(|a| (a.id.clone(), a.journal.clone())).collect(),
        }
    }
}

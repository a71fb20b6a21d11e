//! Scenario files and built-in presets.
//!
//! The format is line oriented. Top-level `key = value` lines come first,
//! then one `[agent ID]` section per agent. `#` starts a comment line.
//!
//! ```text
//! protocol = bme
//! budget = 64
//! cansee.3 = enumerate
//! toggle.listen_after_step3 = both
//!
//! [agent E1]
//! strategy = bme.attacker
//! knows = E1, key:kE1S
//! honest = A, S, B
//! ```

use crate::knowledge::{AgentKnowledge, Label};
use crate::strategies::{Program, Role, ToggleValues, STRATEGY_NAMES};
use crate::term::{parse_term_list, AgentId, Term};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_BUDGET: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanSeePolicy {
    /// Every eligible spy observes, fixed when the triplet is posted.
    Full,
    /// Eligible spies restricted to this set, fixed at posting.
    Fixed(BTreeSet<AgentId>),
    /// Observer set chosen as a branch when the triplet leaves the network.
    Enumerate,
    /// Like `Enumerate`, except that an erase by `eraser` resolves to exactly
    /// `observers`. Written `E1, E2 erased-by E2`.
    Pinned { observers: BTreeSet<AgentId>, eraser: AgentId },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToggleSetting {
    #[default]
    Off,
    On,
    Both,
}

impl ToggleSetting {
    fn values(self) -> &'static [bool] {
        match self {
            ToggleSetting::Off => &[false],
            ToggleSetting::On => &[true],
            ToggleSetting::Both => &[false, true],
        }
    }
    fn as_str(self) -> &'static str {
        match self {
            ToggleSetting::Off => "false",
            ToggleSetting::On => "true",
            ToggleSetting::Both => "both",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub strategy: String,
    pub role: Role,
    pub knows: Vec<Term>,
    pub labels: BTreeMap<AgentId, Label>,
    pub params: BTreeMap<String, String>,
}

impl AgentSpec {
    pub fn new(id: &str, strategy: &str) -> Self {
        AgentSpec {
            id: id.into(),
            strategy: strategy.into(),
            role: Program::default_role(strategy),
            knows: vec![],
            labels: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    /// Initial knowledge: the listed terms plus the agent's own name.
    pub fn initial_knowledge(&self) -> AgentKnowledge {
        let mut terms = self.knows.clone();
        terms.push(Term::agent(&self.id));
        AgentKnowledge::with(terms, self.labels.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub protocol: String,
    pub budget: u32,
    pub fresh_ns: String,
    pub fake_count: u32,
    pub cansee: BTreeMap<String, CanSeePolicy>,
    pub listen_after_step3: ToggleSetting,
    pub stop_after_first: ToggleSetting,
    pub agents: Vec<AgentSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            protocol: String::new(),
            budget: DEFAULT_BUDGET,
            fresh_ns: "fresh".into(),
            fake_count: 1,
            cansee: BTreeMap::new(),
            listen_after_step3: ToggleSetting::Off,
            stop_after_first: ToggleSetting::Off,
            agents: vec![],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn syntax(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Syntax { line, msg: msg.into() }
}

fn parse_ids(s: &str) -> BTreeSet<AgentId> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a AgentId>) -> String {
    ids.into_iter().cloned().collect::<Vec<_>>().join(", ")
}

fn parse_toggle(line: usize, v: &str) -> Result<ToggleSetting, ScenarioError> {
    match v {
        "true" => Ok(ToggleSetting::On),
        "false" => Ok(ToggleSetting::Off),
        "both" => Ok(ToggleSetting::Both),
        o => Err(syntax(line, format!("expected true|false|both, got `{o}`"))),
    }
}

pub fn parse_cansee(v: &str) -> CanSeePolicy {
    match v.trim() {
        "all" => CanSeePolicy::Full,
        "enumerate" => CanSeePolicy::Enumerate,
        ids => match ids.split_once("erased-by") {
            Some((obs, eraser)) => CanSeePolicy::Pinned { observers: parse_ids(obs), eraser: eraser.trim().into() },
            None => CanSeePolicy::Fixed(parse_ids(ids)),
        },
    }
}

impl Scenario {
    pub fn parse(src: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::default();
        let mut current: Option<AgentSpec> = None;
        for (n, raw) in src.lines().enumerate() {
            let line = n + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            if let Some(head) = text.strip_prefix('[') {
                let inner = head.strip_suffix(']').ok_or_else(|| syntax(line, "unterminated section header"))?;
                let id = inner.trim().strip_prefix("agent").map(str::trim).filter(|s| !s.is_empty());
                let id = id.ok_or_else(|| syntax(line, "expected `[agent ID]`"))?;
                if let Some(a) = current.take() {
                    sc.agents.push(a);
                }
                current = Some(AgentSpec::new(id, ""));
                continue;
            }
            let (k, v) = text.split_once('=').ok_or_else(|| syntax(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            match current.as_mut() {
                None => sc.set_top(line, k, v)?,
                Some(a) => set_agent(a, line, k, v)?,
            }
        }
        if let Some(a) = current.take() {
            sc.agents.push(a);
        }
        sc.validate()?;
        Ok(sc)
    }

    fn set_top(&mut self, line: usize, k: &str, v: &str) -> Result<(), ScenarioError> {
        let num = |v: &str| v.parse::<u32>().map_err(|_| syntax(line, format!("expected a number, got `{v}`")));
        match k {
            "protocol" => self.protocol = v.into(),
            "budget" => self.budget = num(v)?,
            "fake_count" => self.fake_count = num(v)?,
            "fresh_ns" => self.fresh_ns = v.into(),
            "toggle.listen_after_step3" => self.listen_after_step3 = parse_toggle(line, v)?,
            "toggle.stop_after_first" => self.stop_after_first = parse_toggle(line, v)?,
            _ => match k.strip_prefix("cansee.") {
                Some(step) if !step.is_empty() => {
                    self.cansee.insert(step.into(), parse_cansee(v));
                }
                _ => return Err(syntax(line, format!("unknown key `{k}`"))),
            },
        }
        Ok(())
    }

    /// Checks cross-references and structural constraints.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if self.fresh_ns.is_empty() || self.fresh_ns.contains(char::is_whitespace) {
            return bad("fresh_ns must be a non-empty word".into());
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id.as_str()) {
                return bad(format!("duplicate agent `{}`", a.id));
            }
            if !STRATEGY_NAMES.contains(&a.strategy.as_str()) {
                return bad(format!("agent `{}`: unknown strategy `{}`", a.id, a.strategy));
            }
            if a.labels.contains_key(&a.id) {
                return bad(format!("agent `{}` cannot label itself", a.id));
            }
            if !a.role.is_adversarial() && a.strategy.ends_with("attacker") {
                return bad(format!("agent `{}`: attacker strategy with honest role", a.id));
            }
            if a.role.is_adversarial() && !(a.strategy.ends_with("attacker") || a.strategy.starts_with("guardian.")) {
                return bad(format!("agent `{}`: honest strategy with adversarial role", a.id));
            }
        }
        for (step, pol) in &self.cansee {
            let named = match pol {
                CanSeePolicy::Fixed(set) => Some(set.clone()),
                CanSeePolicy::Pinned { observers, eraser } => {
                    if !observers.contains(eraser) {
                        return bad(format!(
                            "cansee.{step}: inadmissible observer set {{{}}}: it omits the eraser `{eraser}`",
                            join_ids(observers)
                        ));
                    }
                    Some(observers.clone())
                }
                _ => None,
            };
            if let Some(set) = named {
                for who in &set {
                    match self.agents.iter().find(|a| a.id == *who) {
                        None => return bad(format!("cansee.{step} names unknown agent `{who}`")),
                        Some(a) if !a.role.is_adversarial() => {
                            return bad(format!("cansee.{step} names `{who}`, which never spies"))
                        }
                        _ => {}
                    }
                }
            }
        }
        for tv in self.toggle_values() {
            for a in &self.agents {
                Program::build(&a.strategy, &a.id, &a.params, a.role, &tv)
                    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Every combination of toggle values the explorer fans out over.
    pub fn toggle_values(&self) -> Vec<ToggleValues> {
        let mut out = vec![];
        for &l in self.listen_after_step3.values() {
            for &s in self.stop_after_first.values() {
                out.push(ToggleValues { listen_after_step3: l, stop_after_first: s, fake_count: self.fake_count });
            }
        }
        out
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agent_mut(&mut self, id: &str) -> Option<&mut AgentSpec> {
        self.agents.iter_mut().find(|a| a.id == id)
    }

    /// Canonical text form; `parse(to_text(s)) == s`.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "protocol = {}", self.protocol);
        let _ = writeln!(o, "budget = {}", self.budget);
        let _ = writeln!(o, "fresh_ns = {}", self.fresh_ns);
        let _ = writeln!(o, "fake_count = {}", self.fake_count);
        for (step, pol) in &self.cansee {
            let v = match pol {
                CanSeePolicy::Full => "all".to_string(),
                CanSeePolicy::Enumerate => "enumerate".to_string(),
                CanSeePolicy::Fixed(s) => join_ids(s),
                CanSeePolicy::Pinned { observers, eraser } => format!("{} erased-by {eraser}", join_ids(observers)),
            };
            let _ = writeln!(o, "cansee.{step} = {v}");
        }
        let _ = writeln!(o, "toggle.listen_after_step3 = {}", self.listen_after_step3.as_str());
        let _ = writeln!(o, "toggle.stop_after_first = {}", self.stop_after_first.as_str());
        for a in &self.agents {
            let _ = writeln!(o, "\n[agent {}]", a.id);
            let _ = writeln!(o, "strategy = {}", a.strategy);
            let role = match a.role {
                Role::Honest => "honest",
                Role::Attacker => "attacker",
                Role::Guardian => "guardian",
            };
            let _ = writeln!(o, "role = {role}");
            if !a.knows.is_empty() {
                let terms: Vec<String> = a.knows.iter().map(Term::to_string).collect();
                let _ = writeln!(o, "knows = {}", terms.join(", "));
            }
            for label in [Label::Honest, Label::Dishonest, Label::Unknown] {
                let ids: Vec<&AgentId> = a.labels.iter().filter(|(_, l)| **l == label).map(|(i, _)| i).collect();
                if !ids.is_empty() {
                    let _ = writeln!(o, "{label} = {}", join_ids(ids));
                }
            }
            for (k, v) in &a.params {
                let _ = writeln!(o, "param.{k} = {v}");
            }
        }
        o
    }
}

fn set_agent(a: &mut AgentSpec, line: usize, k: &str, v: &str) -> Result<(), ScenarioError> {
    match k {
        "strategy" => {
            a.strategy = v.into();
            a.role = Program::default_role(v);
        }
        "role" => {
            a.role = match v {
                "honest" => Role::Honest,
                "attacker" => Role::Attacker,
                "guardian" => Role::Guardian,
                o => return Err(syntax(line, format!("unknown role `{o}`"))),
            }
        }
        "knows" => a.knows = parse_term_list(v).map_err(|e| syntax(line, e.to_string()))?,
        "honest" | "dishonest" | "unknown" => {
            let label: Label = k.parse().map_err(|e: String| syntax(line, e))?;
            for id in parse_ids(v) {
                a.labels.insert(id, label);
            }
        }
        _ => match k.strip_prefix("param.") {
            Some(p) if !p.is_empty() => {
                a.params.insert(p.into(), v.into());
            }
            _ => return Err(syntax(line, format!("unknown agent key `{k}`"))),
        },
    }
    Ok(())
}

/// Names of every built-in preset.
pub fn preset_names() -> Vec<String> {
    let mut v = Vec::new();
    for proto in ["bme", "sra3p"] {
        for case in 1..=6 {
            v.push(format!("{proto}-case{case}"));
            for g in ["E1", "E2"] {
                v.push(format!("{proto}-case{case}-g{g}"));
            }
        }
    }
    v
}

/// How the two attackers regard each other in each numbered case.
fn case_labels(case: u8) -> Option<(Option<Label>, Option<Label>)> {
    // (label E1 gives E2, label E2 gives E1)
    Some(match case {
        1 => (Some(Label::Honest), Some(Label::Honest)),
        2 => (Some(Label::Dishonest), Some(Label::Dishonest)),
        3 => (None, None),
        4 => (None, Some(Label::Honest)),
        5 => (None, Some(Label::Dishonest)),
        6 => (None, Some(Label::Unknown)),
        _ => return None,
    })
}

fn attacker_spec(
    id: &str,
    other: &str,
    view: Option<Label>,
    strategy: &str,
    base: &[&str],
    knows: Vec<Term>,
) -> AgentSpec {
    let mut a = AgentSpec::new(id, strategy);
    a.knows = knows;
    for b in base {
        a.labels.insert(b.to_string(), Label::Honest);
    }
    if let Some(l) = view {
        a.labels.insert(other.to_string(), l);
    }
    a
}

fn t(s: &str) -> Term {
    crate::term::parse_term(s).expect("preset term")
}

/// Builds a preset such as `bme-case2` or `sra3p-case5-gE1`.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let unknown = || ScenarioError::UnknownPreset(name.into());
    let mut parts = name.split('-');
    let proto = parts.next().ok_or_else(unknown)?;
    let case: u8 =
        parts.next().and_then(|c| c.strip_prefix("case")).and_then(|c| c.parse().ok()).ok_or_else(unknown)?;
    let guardian = match parts.next() {
        None => None,
        Some("gE1") => Some("E1"),
        Some("gE2") => Some("E2"),
        Some(_) => return Err(unknown()),
    };
    if parts.next().is_some() {
        return Err(unknown());
    }
    let (v12, v21) = case_labels(case).ok_or_else(unknown)?;
    let mut sc = Scenario { protocol: proto.into(), ..Scenario::default() };
    match proto {
        "bme" => {
            let mut a = AgentSpec::new("A", "bme.honest_a");
            a.knows = vec![t("B"), t("S"), t("key:kAS")];
            let mut b = AgentSpec::new("B", "bme.honest_b");
            b.knows = vec![t("A"), t("S"), t("key:kBS")];
            let mut s = AgentSpec::new("S", "bme.server");
            s.knows =
                ["A", "B", "E1", "E2", "key:kAS", "key:kBS", "key:kE1S", "key:kE2S"].iter().map(|x| t(x)).collect();
            let e1 = attacker_spec("E1", "E2", v12, "bme.attacker", &["A", "S", "B"], vec![t("key:kE1S")]);
            let e2 = attacker_spec("E2", "E1", v21, "bme.attacker", &["A", "S", "B"], vec![t("key:kE2S")]);
            sc.agents = vec![a, b, s, e1, e2];
            sc.cansee.insert("1".into(), CanSeePolicy::Fixed(["E1".to_string(), "E2".to_string()].into()));
            sc.cansee.insert("3".into(), CanSeePolicy::Enumerate);
            sc.listen_after_step3 = ToggleSetting::Both;
        }
        "sra3p" => {
            let mut a = AgentSpec::new("A", "sra3p.honest_a");
            a.knows = vec![t("B"), t("atom:M"), t("key:KA")];
            let mut b = AgentSpec::new("B", "sra3p.honest_b");
            b.knows = vec![t("A"), t("key:KB")];
            let e1 = attacker_spec("E1", "E2", v12, "sra3p.attacker", &["A", "B"], vec![]);
            let e2 = attacker_spec("E2", "E1", v21, "sra3p.attacker", &["A", "B"], vec![]);
            sc.agents = vec![a, b, e1, e2];
            sc.cansee.insert("3".into(), CanSeePolicy::Enumerate);
            sc.stop_after_first = ToggleSetting::Both;
        }
        _ => return Err(unknown()),
    }
    if let Some(g) = guardian {
        let spec = sc.agent_mut(g).expect("preset has both attackers");
        spec.strategy = format!("guardian.{proto}");
        spec.role = Role::Guardian;
    }
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_and_round_trips() {
        for name in preset_names() {
            let sc = preset(&name).unwrap();
            let again = Scenario::parse(&sc.to_text()).unwrap();
            assert_eq!(sc, again, "{name}");
        }
    }

    #[test]
    fn case_labels_match_description() {
        let sc = preset("bme-case6").unwrap();
        assert_eq!(sc.agent("E2").unwrap().labels.get("E1"), Some(&Label::Unknown));
        assert!(!sc.agent("E1").unwrap().labels.contains_key("E2"));
        let sc = preset("sra3p-case2-gE1").unwrap();
        assert_eq!(sc.agent("E1").unwrap().role, Role::Guardian);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(preset("bme-case9"), Err(ScenarioError::UnknownPreset(_))));
        assert!(Scenario::parse("budget = x").is_err());
        assert!(Scenario::parse("[agent A]\nstrategy = nope").is_err());
        assert!(Scenario::parse("cansee.3 = A\n[agent A]\nstrategy = bme.honest_a").is_err());
        assert!(Scenario::parse("[agent A]\nstrategy = passive\n[agent A]\nstrategy = passive").is_err());
    }

    #[test]
    fn toggles_fan_out() {
        let sc = preset("bme-case1").unwrap();
        assert_eq!(sc.toggle_values().len(), 2);
    }
}

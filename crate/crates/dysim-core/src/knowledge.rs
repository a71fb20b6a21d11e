//! Per-agent proprietary datasets.
//!
//! An [`AgentKnowledge`] holds the agent's analysis-closed term set plus the
//! agent identifiers it pays attention to, each carrying exactly one belief
//! label. Storing labels in a single map makes the honest / dishonest /
//! unknown cells a partition of the attentive set by construction.

use crate::term::{analyze_closure, AgentId, Dataset, Term};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Honest,
    Dishonest,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Honest => "honest",
            Label::Dishonest => "dishonest",
            Label::Unknown => "unknown",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(Label::Honest),
            "dishonest" => Ok(Label::Dishonest),
            "unknown" => Ok(Label::Unknown),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentKnowledge {
    pub terms: Dataset,
    labels: BTreeMap<AgentId, Label>,
}

impl AgentKnowledge {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds knowledge from initial terms (closed under analysis) and labels.
    pub fn with(terms: impl IntoIterator<Item = Term>, labels: impl IntoIterator<Item = (AgentId, Label)>) -> Self {
        let raw: Dataset = terms.into_iter().collect();
        AgentKnowledge { terms: analyze_closure(&raw), labels: labels.into_iter().collect() }
    }

    /// Returns a copy with `t` and everything analysis derives from it.
    pub fn learn_term(&self, t: &Term) -> Self {
        let mut k = self.clone();
        k.absorb(t);
        k
    }

    /// In-place variant of [`learn_term`](Self::learn_term).
    pub fn absorb(&mut self, t: &Term) {
        let t = crate::term::normalize(t);
        if self.terms.contains(&t) {
            return;
        }
        self.terms.insert(t);
        self.terms = analyze_closure(&self.terms);
    }

    /// Derivability of `t`; attentive identifiers count as known names.
    pub fn knows(&self, t: &Term) -> bool {
        if self.labels.is_empty() {
            return crate::term::can_synthesize(t, &self.terms);
        }
        let mut d = self.terms.clone();
        d.extend(self.labels.keys().map(|a| Term::Agent(a.clone())));
        crate::term::can_synthesize(t, &d)
    }

    /// Places `who` in the `label` cell, removing it from the other two.
    pub fn classify_agent(&self, who: &str, label: Label) -> Self {
        let mut k = self.clone();
        k.set_label(who, label);
        k
    }

    pub fn set_label(&mut self, who: &str, label: Label) {
        self.labels.insert(who.to_string(), label);
    }

    pub fn label_of(&self, who: &str) -> Option<Label> {
        self.labels.get(who).copied()
    }

    pub fn is_attentive(&self, who: &str) -> bool {
        self.labels.contains_key(who)
    }

    pub fn attentive(&self) -> BTreeSet<AgentId> {
        self.labels.keys().cloned().collect()
    }

    pub fn labels(&self) -> &BTreeMap<AgentId, Label> {
        &self.labels
    }

    pub fn cell(&self, label: Label) -> BTreeSet<AgentId> {
        self.labels.iter().filter(|(_, l)| **l == label).map(|(a, _)| a.clone()).collect()
    }

    pub fn honest(&self) -> BTreeSet<AgentId> {
        self.cell(Label::Honest)
    }
    pub fn dishonest(&self) -> BTreeSet<AgentId> {
        self.cell(Label::Dishonest)
    }
    pub fn unknown(&self) -> BTreeSet<AgentId> {
        self.cell(Label::Unknown)
    }

    /// An attacker that pays attention to no agent at all.
    pub fn is_dummy(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One confirmed snapshot per network action index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeJournal {
    snapshots: Vec<AgentKnowledge>,
}

impl KnowledgeJournal {
    pub fn new(initial: AgentKnowledge) -> Self {
        KnowledgeJournal { snapshots: vec![initial] }
    }
    pub fn commit(&mut self, k: AgentKnowledge) {
        self.snapshots.push(k);
    }
    pub fn snapshot(&self, i: usize) -> Option<&AgentKnowledge> {
        self.snapshots.get(i)
    }
    pub fn latest(&self) -> &AgentKnowledge {
        self.snapshots.last().expect("journal always holds the initial snapshot")
    }
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
    pub fn snapshots(&self) -> &[AgentKnowledge] {
        &self.snapshots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn learn_pair_adds_components() {
        let k = AgentKnowledge::new().learn_term(&t("pair(atom:a,atom:b)"));
        for s in ["pair(atom:a,atom:b)", "atom:a", "atom:b"] {
            assert!(k.terms.contains(&t(s)));
        }
    }

    #[test]
    fn learn_decrypts_with_known_key() {
        let k = AgentKnowledge::with([t("key:k")], []).learn_term(&t("enc(atom:m,key:k)"));
        assert!(k.terms.contains(&t("atom:m")));
    }

    #[test]
    fn learn_is_idempotent_and_pure() {
        let k = AgentKnowledge::with([t("atom:m")], []);
        let k2 = k.learn_term(&t("atom:m"));
        assert_eq!(k, k2);
        let k3 = k.learn_term(&t("atom:z"));
        assert!(!k.terms.contains(&t("atom:z")));
        assert!(k3.terms.contains(&t("atom:z")));
    }

    #[test]
    fn classify_moves_between_cells() {
        let k = AgentKnowledge::new().classify_agent("E1", Label::Unknown);
        assert!(k.unknown().contains("E1"));
        let k = k.classify_agent("E1", Label::Dishonest);
        assert!(k.dishonest().contains("E1") && !k.unknown().contains("E1"));
        let h = k.classify_agent("E1", Label::Honest);
        assert_eq!(h.classify_agent("E1", Label::Honest), h);
    }

    #[test]
    fn dummy_detection() {
        let k = AgentKnowledge::new();
        assert!(k.is_dummy());
        assert!(!k.classify_agent("A", Label::Honest).is_dummy());
        // agent-name terms are data, not attentive entries
        let k = k.learn_term(&t("pair(A,atom:x)")).learn_term(&t("key:k"));
        assert!(k.is_dummy());
    }

    #[test]
    fn partition_covers_attentive() {
        let k = AgentKnowledge::with([], [("A".into(), Label::Honest), ("E".into(), Label::Unknown)])
            .classify_agent("F", Label::Dishonest);
        let mut all = k.honest();
        all.extend(k.dishonest());
        all.extend(k.unknown());
        assert_eq!(all, k.attentive());
    }
}

//! Symbolic message terms under perfect cryptography.
//!
//! Terms are plain immutable values. Commutative encryption is a per-layer
//! flag: a maximal run of commutative layers around a non-commutative core is
//! kept in a canonical order (sorted by the printed form of each key), so
//! structural equality of normalized terms coincides with equality modulo
//! layer reordering.
//!
//! Analysis (`analyze_closure`) decomposes pairs and strips encryption layers
//! whose key is derivable; symmetric keys are their own inverse. Synthesis
//! (`can_synthesize`) is decided by goal-directed recursion.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Agent identifiers are short alphanumeric names such as `A`, `S`, `E1`.
pub type AgentId = String;

/// Classification of an atomic value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomTag {
    Nonce,
    Payload,
    Fake,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Agent(AgentId),
    Atom { label: String, tag: AtomTag },
    Key(String),
    Pair(Box<Term>, Box<Term>),
    Enc { body: Box<Term>, key: Box<Term>, comm: bool },
}

/// A finite set of terms (the term portion of an agent dataset).
pub type Dataset = BTreeSet<Term>;

impl Term {
    pub fn agent(id: impl Into<String>) -> Term {
        Term::Agent(id.into())
    }
    pub fn atom(label: impl Into<String>, tag: AtomTag) -> Term {
        Term::Atom { label: label.into(), tag }
    }
    pub fn payload(label: impl Into<String>) -> Term {
        Term::atom(label, AtomTag::Payload)
    }
    pub fn key(label: impl Into<String>) -> Term {
        Term::Key(label.into())
    }
    pub fn pair(l: Term, r: Term) -> Term {
        Term::Pair(Box::new(l), Box::new(r))
    }
    /// Non-commutative encryption.
    pub fn enc(body: Term, key: Term) -> Term {
        Term::Enc { body: Box::new(body), key: Box::new(key), comm: false }
    }
    /// Commutative encryption layer (normalized on construction).
    pub fn cenc(body: Term, key: Term) -> Term {
        normalize(&Term::Enc { body: Box::new(body), key: Box::new(key), comm: true })
    }

    pub fn as_agent(&self) -> Option<&str> {
        match self {
            Term::Agent(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_comm_enc(&self) -> bool {
        matches!(self, Term::Enc { comm: true, .. })
    }
}

/// Splits a term into its maximal outer run of commutative keys and the core.
/// Keys are returned outermost first.
fn comm_run(t: &Term) -> (Vec<&Term>, &Term) {
    let mut keys = Vec::new();
    let mut cur = t;
    while let Term::Enc { body, key, comm: true } = cur {
        keys.push(key.as_ref());
        cur = body;
    }
    (keys, cur)
}

/// Wraps `core` with commutative layers; `keys[0]` becomes the innermost layer.
fn wrap_comm(core: Term, keys: impl IntoIterator<Item = Term>) -> Term {
    keys.into_iter().fold(core, |acc, k| Term::Enc { body: Box::new(acc), key: Box::new(k), comm: true })
}

/// Canonical representative modulo reordering of commutative layers.
pub fn normalize(t: &Term) -> Term {
    match t {
        Term::Agent(_) | Term::Atom { .. } | Term::Key(_) => t.clone(),
        Term::Pair(l, r) => Term::pair(normalize(l), normalize(r)),
        Term::Enc { body, key, comm: false } => Term::enc(normalize(body), normalize(key)),
        Term::Enc { comm: true, .. } => {
            let (keys, core) = comm_run(t);
            let core = normalize(core);
            let mut keys: Vec<Term> = keys.into_iter().map(normalize).collect();
            keys.sort_by_cached_key(|k| (k.to_string(), k.clone()));
            wrap_comm(core, keys)
        }
    }
}

/// All terms obtained by removing exactly one commutative layer whose key
/// satisfies `known`. Input must be normalized; outputs are normalized.
pub fn peel_comm_layers(t: &Term, known: impl Fn(&Term) -> bool) -> Vec<Term> {
    peel_where(t, |_, k| known(k))
}

/// Peels layer `i` (outermost is 0) whenever `usable(i, key)` holds.
fn peel_where(t: &Term, usable: impl Fn(usize, &Term) -> bool) -> Vec<Term> {
    let (keys, core) = comm_run(t);
    let mut out = Vec::new();
    for i in 0..keys.len() {
        if usable(i, keys[i]) {
            // keys are outermost first; rebuild innermost first without index i
            let rest: Vec<Term> =
                keys.iter().enumerate().rev().filter(|(j, _)| *j != i).map(|(_, k)| (*k).clone()).collect();
            out.push(wrap_comm(core.clone(), rest));
        }
    }
    out
}

fn one_step(t: &Term, d: &Dataset) -> Vec<Term> {
    match t {
        Term::Pair(l, r) => vec![(**l).clone(), (**r).clone()],
        Term::Enc { body, key, comm: false } => {
            if can_synthesize(key, d) {
                vec![(**body).clone()]
            } else {
                vec![]
            }
        }
        Term::Enc { comm: true, .. } => peel_comm_layers(t, |k| can_synthesize(k, d)),
        _ => vec![],
    }
}

/// Least fixpoint of `d` under projection and decryption.
pub fn analyze_closure(d: &Dataset) -> Dataset {
    let mut set: Dataset = d.iter().map(normalize).collect();
    loop {
        let mut fresh = Vec::new();
        for t in &set {
            for u in one_step(t, &set) {
                if !set.contains(&u) {
                    fresh.push(u);
                }
            }
        }
        if fresh.is_empty() {
            return set;
        }
        set.extend(fresh);
    }
}

/// Whether `goal` is derivable from `d` by pairing and encryption.
/// `d` should already be closed under analysis.
pub fn can_synthesize(goal: &Term, d: &Dataset) -> bool {
    let goal = normalize(goal);
    synth(&goal, d)
}

fn synth(goal: &Term, d: &Dataset) -> bool {
    if d.contains(goal) {
        return true;
    }
    match goal {
        Term::Pair(l, r) => synth(l, d) && synth(r, d),
        Term::Enc { body, key, comm: false } => synth(body, d) && synth(key, d),
        Term::Enc { comm: true, .. } => {
            // the last layer applied may be any one of the commuting layers
            let (keys, _) = comm_run(goal);
            let usable: Vec<bool> = keys.iter().map(|k| synth(k, d)).collect();
            peel_indices(goal, &usable).into_iter().any(|rest| synth(&rest, d))
        }
        _ => false,
    }
}

fn peel_indices(t: &Term, usable: &[bool]) -> Vec<Term> {
    peel_where(t, |i, _| usable[i])
}

// ---------------------------------------------------------------------------
// Text grammar: `A`, `atom:x`, `nonce:x`, `fake:x`, `key:k`, `pair(t,t)`,
// `enc(t,k)`, `cenc(t,k)`.

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Agent(a) => write!(f, "{a}"),
            Term::Atom { label, tag } => {
                let p = match tag {
                    AtomTag::Payload => "atom",
                    AtomTag::Nonce => "nonce",
                    AtomTag::Fake => "fake",
                };
                write!(f, "{p}:{label}")
            }
            Term::Key(k) => write!(f, "key:{k}"),
            Term::Pair(l, r) => write!(f, "pair({l},{r})"),
            Term::Enc { body, key, comm } => {
                write!(f, "{}({body},{key})", if *comm { "cenc" } else { "enc" })
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input in term `{0}`")]
    Eof(String),
    #[error("unexpected character `{ch}` at offset {at} in term `{src}`")]
    Unexpected { ch: char, at: usize, src: String },
    #[error("invalid token `{tok}` in term `{src}`")]
    BadToken { tok: String, src: String },
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '-' | '.' | '*' | '\'' | '+')
}

fn is_agent_id(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "pair" | "enc" | "cenc")
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }
    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }
    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(ch) => Err(ParseError::Unexpected { ch, at: self.pos, src: self.src.into() }),
            None => Err(ParseError::Eof(self.src.into())),
        }
    }
    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_label_char(c)) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }
    fn term(&mut self) -> Result<Term, ParseError> {
        let tok = self.token();
        if tok.is_empty() {
            return match self.peek() {
                Some(ch) => Err(ParseError::Unexpected { ch, at: self.pos, src: self.src.into() }),
                None => Err(ParseError::Eof(self.src.into())),
            };
        }
        let bad = || ParseError::BadToken { tok: tok.to_string(), src: self.src.to_string() };
        match tok {
            "pair" | "enc" | "cenc" => {
                self.expect('(')?;
                let a = self.term()?;
                self.expect(',')?;
                let b = self.term()?;
                self.expect(')')?;
                Ok(match tok {
                    "pair" => Term::pair(a, b),
                    "enc" => Term::enc(a, b),
                    _ => Term::Enc { body: Box::new(a), key: Box::new(b), comm: true },
                })
            }
            _ => {
                let tagged = |p: &str| tok.strip_prefix(p).filter(|l| !l.is_empty());
                if let Some(l) = tagged("atom:") {
                    Ok(Term::atom(l, AtomTag::Payload))
                } else if let Some(l) = tagged("nonce:") {
                    Ok(Term::atom(l, AtomTag::Nonce))
                } else if let Some(l) = tagged("fake:") {
                    Ok(Term::atom(l, AtomTag::Fake))
                } else if let Some(l) = tagged("key:") {
                    Ok(Term::key(l))
                } else if is_agent_id(tok) {
                    Ok(Term::agent(tok))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// Parses a term in the text grammar. The result is returned as written
/// (not normalized) so that printing reproduces the input exactly.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser { src, pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    match p.peek() {
        None => Ok(t),
        Some(ch) => Err(ParseError::Unexpected { ch, at: p.pos, src: src.into() }),
    }
}

/// Splits a comma-separated list of terms at top level (commas nested inside
/// parentheses are kept).
pub fn parse_term_list(src: &str) -> Result<Vec<Term>, ParseError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in src.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                let piece = src[start..i].trim();
                if !piece.is_empty() {
                    out.push(parse_term(piece)?);
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    let piece = src[start..].trim();
    if !piece.is_empty() {
        out.push(parse_term(piece)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }
    fn set(items: &[&str]) -> Dataset {
        items.iter().map(|s| normalize(&t(s))).collect()
    }

    #[test]
    fn proj_yields_components() {
        let c = analyze_closure(&set(&["pair(atom:a,atom:b)"]));
        assert!(c.contains(&t("atom:a")) && c.contains(&t("atom:b")));
    }

    #[test]
    fn empty_closure_is_empty() {
        assert!(analyze_closure(&Dataset::new()).is_empty());
    }

    #[test]
    fn decr_with_symmetric_key() {
        let c = analyze_closure(&set(&["enc(atom:m,key:k)", "key:k"]));
        assert!(c.contains(&t("atom:m")));
    }

    #[test]
    fn decr_needs_key() {
        let c = analyze_closure(&set(&["enc(atom:m,key:k)"]));
        assert!(!c.contains(&t("atom:m")));
    }

    #[test]
    fn key_learned_later_still_opens() {
        let c = analyze_closure(&set(&["enc(atom:m,key:k)", "pair(atom:x,key:k)"]));
        assert!(c.contains(&t("atom:m")));
    }

    #[test]
    fn commutative_outer_layer_peeled() {
        let c = analyze_closure(&set(&["cenc(cenc(atom:M,key:kA),key:kB)", "key:kB"]));
        assert!(c.contains(&Term::cenc(t("atom:M"), t("key:kA"))));
        assert!(!c.contains(&t("atom:M")));
    }

    #[test]
    fn commutative_inner_layer_peeled() {
        let c = analyze_closure(&set(&["cenc(cenc(atom:M,key:kA),key:kB)", "key:kA"]));
        assert!(c.contains(&Term::cenc(t("atom:M"), t("key:kB"))));
    }

    #[test]
    fn synthesis_examples() {
        let d = set(&["atom:m"]);
        assert!(can_synthesize(&t("atom:m"), &d));
        let d = set(&["atom:m", "key:k"]);
        assert!(can_synthesize(&t("enc(atom:m,key:k)"), &d));
        let d = analyze_closure(&set(&["enc(atom:m,key:k)"]));
        assert!(!can_synthesize(&t("atom:m"), &d));
    }

    #[test]
    fn synthesis_of_commutative_stack_from_partial() {
        // {M}kA known plus kB: {{M}kA}kB derivable in either layer order
        let d = set(&["cenc(atom:M,key:kA)", "key:kB"]);
        assert!(can_synthesize(&t("cenc(cenc(atom:M,key:kB),key:kA)"), &d));
        assert!(!can_synthesize(&t("cenc(atom:M,key:kB)"), &d));
    }

    #[test]
    fn normalize_examples() {
        let a = normalize(&t("cenc(cenc(atom:M,key:kA),key:kB)"));
        let b = normalize(&t("cenc(cenc(atom:M,key:kB),key:kA)"));
        assert_eq!(a, b);
        assert_eq!(normalize(&t("atom:x")), t("atom:x"));
        assert_eq!(normalize(&t("enc(atom:m,key:k)")), t("enc(atom:m,key:k)"));
        // non-commutative layer blocks reordering
        let c = normalize(&t("cenc(enc(cenc(atom:M,key:kB),key:kN),key:kA)"));
        assert_eq!(c.to_string(), "cenc(enc(cenc(atom:M,key:kB),key:kN),key:kA)");
    }

    #[test]
    fn round_trip_grammar() {
        for s in [
            "A",
            "atom:x",
            "nonce:n1",
            "fake:fresh:E2:1",
            "key:kAS",
            "pair(A,B)",
            "pair(enc(key:fresh:S:1,key:kAS),enc(key:fresh:S:1,key:kE1S))",
            "cenc(cenc(atom:M,key:KB),key:KA)",
        ] {
            assert_eq!(t(s).to_string(), s);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(parse_term("pair(A").is_err());
        assert!(parse_term("atom:").is_err());
        assert!(parse_term("enc(A,B))").is_err());
        assert!(parse_term("").is_err());
    }

    #[test]
    fn term_list_splits_top_level() {
        let v = parse_term_list("key:kAS, pair(A,B), S").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[1], t("pair(A,B)"));
    }
}

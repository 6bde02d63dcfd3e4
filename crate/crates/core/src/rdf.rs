//! In-memory triple store.
//!
//! Triples are kept in three nested permutation indexes (SPO, POS, OSP).
//! Every index is a `BTreeMap`, so enumeration is always in lexicographic
//! term order and results are stable between runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

/// Characters that may never appear inside an IRI.
const IRI_FORBIDDEN: &[char] = &['<', '>', '"', '{', '}', '|', '^', '`', '\\'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("IRI must not be empty")]
    EmptyIri,
    #[error("IRI {0:?} contains an illegal character")]
    IllegalIriChar(String),
}

/// An RDF node: an IRI or a plain string literal.
///
/// Literals carry neither datatype nor language tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Term {
    Iri(String),
    Literal(String),
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Result<Self, TermError> {
        let value = value.into();
        if value.is_empty() {
            return Err(TermError::EmptyIri);
        }
        if value
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || IRI_FORBIDDEN.contains(&c))
        {
            return Err(TermError::IllegalIriChar(value));
        }
        Ok(Term::Iri(value))
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal(value.into())
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    /// IRI string or literal lexical form.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri(v) | Term::Literal(v) => v,
        }
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(v) => Some(v),
            Term::Literal(_) => None,
        }
    }

    /// Short display form: the IRI fragment (or last path segment), or the
    /// quoted literal.
    pub fn local_name(&self) -> String {
        match self {
            Term::Iri(v) => local_part(v).to_string(),
            Term::Literal(v) => format!("'{v}'"),
        }
    }
}

pub(crate) fn local_part(iri: &str) -> &str {
    match iri.rfind(['#', '/']) {
        Some(i) if i + 1 < iri.len() => &iri[i + 1..],
        _ => iri,
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(v) => write!(f, "<{v}>"),
            Term::Literal(v) => write!(f, "\"{}\"", escape_literal(v)),
        }
    }
}

pub(crate) fn escape_literal(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("triple {0} has a literal in subject or predicate position")]
pub struct IllFormedTriple(pub String);

/// One statement. Subject and predicate are always IRIs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, IllFormedTriple> {
        if !subject.is_iri() || !predicate.is_iri() {
            return Err(IllFormedTriple(format!("{subject} {predicate} {object}")));
        }
        Ok(Self {
            subject,
            predicate,
            object,
        })
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// One position of a triple pattern.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PatternTerm {
    Bound(Term),
    /// Variable name without the leading `?`.
    Var(String),
}

impl PatternTerm {
    pub fn var(name: impl Into<String>) -> Self {
        PatternTerm::Var(name.into())
    }

    fn bound(&self) -> Option<&Term> {
        match self {
            PatternTerm::Bound(t) => Some(t),
            PatternTerm::Var(_) => None,
        }
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Bound(t)
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Bound(t) => t.fmt(f),
            PatternTerm::Var(v) => write!(f, "?{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<PatternTerm>,
        predicate: impl Into<PatternTerm>,
        object: impl Into<PatternTerm>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    /// Variable names in subject, predicate, object order (may repeat).
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.positions().into_iter().filter_map(|p| match p {
            PatternTerm::Var(v) => Some(v.as_str()),
            PatternTerm::Bound(_) => None,
        })
    }

    pub fn is_ground(&self) -> bool {
        self.variables().next().is_none()
    }

    /// Unify a triple with this pattern. `None` when a bound position
    /// differs or a repeated variable would take two values.
    pub fn unify(&self, triple: &Triple) -> Option<Binding> {
        let mut binding = Binding::new();
        let values = [triple.subject(), triple.predicate(), triple.object()];
        for (pos, value) in self.positions().into_iter().zip(values) {
            match pos {
                PatternTerm::Bound(t) if t != value => return None,
                PatternTerm::Bound(_) => {}
                PatternTerm::Var(name) => match binding.get(name) {
                    Some(existing) if existing != value => return None,
                    Some(_) => {}
                    None => {
                        binding.insert(name.clone(), value.clone());
                    }
                },
            }
        }
        Some(binding)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// Variable → term assignment for one solution row.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding(BTreeMap<String, Term>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    /// Binds `var`, returning the previous value if there was one.
    pub fn insert(&mut self, var: impl Into<String>, value: Term) -> Option<Term> {
        self.0.insert(var.into(), value)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Term)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Union of two bindings, or `None` if they disagree on a shared variable.
    pub fn merge(&self, other: &Binding) -> Option<Binding> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            match out.get(k) {
                Some(existing) if existing != v => return None,
                Some(_) => {}
                None => {
                    out.insert(k, v.clone());
                }
            }
        }
        Some(out)
    }
}

impl FromIterator<(String, Term)> for Binding {
    fn from_iter<I: IntoIterator<Item = (String, Term)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("store is frozen")]
    FrozenStore,
}

type Index = BTreeMap<Term, BTreeMap<Term, BTreeSet<Term>>>;

#[derive(Debug, Default, Clone)]
pub struct TripleStore {
    spo: Index,
    pos: Index,
    osp: Index,
    len: usize,
    frozen: bool,
}

fn index_insert(index: &mut Index, a: &Term, b: &Term, c: &Term) -> bool {
    index
        .entry(a.clone())
        .or_default()
        .entry(b.clone())
        .or_default()
        .insert(c.clone())
}

fn index_contains(index: &Index, a: &Term, b: &Term, c: &Term) -> bool {
    index
        .get(a)
        .and_then(|m| m.get(b))
        .is_some_and(|s| s.contains(c))
}

/// Walks an index, optionally restricted to a first key and a second key,
/// yielding `(a, b, c)` in index order.
type Level2 = BTreeMap<Term, BTreeSet<Term>>;

fn index_scan<'a>(
    index: &'a Index,
    first: Option<&Term>,
    second: Option<&Term>,
) -> Box<dyn Iterator<Item = (&'a Term, &'a Term, &'a Term)> + 'a> {
    let second = second.cloned();
    let level1: Box<dyn Iterator<Item = (&Term, &Level2)>> = match first {
        Some(k) => Box::new(index.get_key_value(k).into_iter()),
        None => Box::new(index.iter()),
    };
    Box::new(level1.flat_map(move |(a, m)| {
        let level2: Box<dyn Iterator<Item = (&Term, &BTreeSet<Term>)>> = match &second {
            Some(k) => Box::new(m.get_key_value(k).into_iter()),
            None => Box::new(m.iter()),
        };
        level2.flat_map(move |(b, set)| set.iter().map(move |c| (a, b, c)))
    }))
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn insert(&mut self, triple: Triple) -> Result<InsertOutcome, StoreError> {
        if self.frozen {
            return Err(StoreError::FrozenStore);
        }
        let Triple {
            subject: s,
            predicate: p,
            object: o,
        } = triple;
        if !index_insert(&mut self.spo, &s, &p, &o) {
            return Ok(InsertOutcome::Duplicate);
        }
        index_insert(&mut self.pos, &p, &o, &s);
        index_insert(&mut self.osp, &o, &s, &p);
        self.len += 1;
        Ok(InsertOutcome::Inserted)
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        index_contains(
            &self.spo,
            triple.subject(),
            triple.predicate(),
            triple.object(),
        )
    }

    /// All triples in SPO order.
    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.enumerate_spo()
    }

    pub fn enumerate_spo(&self) -> impl Iterator<Item = Triple> + '_ {
        index_scan(&self.spo, None, None).map(|(s, p, o)| mk(s, p, o))
    }

    pub fn enumerate_pos(&self) -> impl Iterator<Item = Triple> + '_ {
        index_scan(&self.pos, None, None).map(|(p, o, s)| mk(s, p, o))
    }

    pub fn enumerate_osp(&self) -> impl Iterator<Item = Triple> + '_ {
        index_scan(&self.osp, None, None).map(|(o, s, p)| mk(s, p, o))
    }

    /// Triples unifying with `pattern`, each paired with the variable
    /// binding it produces. The index with the longest bound prefix is used.
    pub fn match_pattern<'a>(
        &'a self,
        pattern: &'a TriplePattern,
    ) -> impl Iterator<Item = (Triple, Binding)> + 'a {
        let s = pattern.subject.bound();
        let p = pattern.predicate.bound();
        let o = pattern.object.bound();
        let candidates: Box<dyn Iterator<Item = Triple> + 'a> = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => Box::new(
                index_contains(&self.spo, s, p, o)
                    .then(|| mk(s, p, o))
                    .into_iter(),
            ),
            (Some(_), _, None) | (None, None, None) => {
                Box::new(index_scan(&self.spo, s, p).map(|(s, p, o)| mk(s, p, o)))
            }
            (None, Some(_), _) => {
                Box::new(index_scan(&self.pos, p, o).map(|(p, o, s)| mk(s, p, o)))
            }
            (_, None, Some(_)) => {
                Box::new(index_scan(&self.osp, o, s).map(|(o, s, p)| mk(s, p, o)))
            }
        };
        candidates.filter_map(move |t| pattern.unify(&t).map(|b| (t, b)))
    }

    /// Objects of `(subject, predicate, ?)`.
    pub fn objects<'a>(
        &'a self,
        subject: &Term,
        predicate: &Term,
    ) -> impl Iterator<Item = &'a Term> + 'a {
        index_scan(&self.spo, Some(subject), Some(predicate)).map(|(_, _, o)| o)
    }

    /// Subjects of `(?, predicate, object)`.
    pub fn subjects<'a>(
        &'a self,
        predicate: &Term,
        object: &Term,
    ) -> impl Iterator<Item = &'a Term> + 'a {
        index_scan(&self.pos, Some(predicate), Some(object)).map(|(_, _, s)| s)
    }

    /// `rdfs:label` of `node` if it has one.
    pub fn label(&self, node: &Term) -> Option<&str> {
        let label = Term::Iri(RDFS_LABEL.to_string());
        index_scan(&self.spo, Some(node), Some(&label))
            .map(|(_, _, o)| o)
            .find(|o| !o.is_iri())
            .map(Term::value)
    }

    /// Display label: `rdfs:label` when present, local name otherwise.
    pub fn display_label(&self, node: &Term) -> String {
        self.label(node)
            .map(str::to_string)
            .unwrap_or_else(|| match node {
                Term::Iri(v) => local_part(v).to_string(),
                Term::Literal(v) => v.clone(),
            })
    }
}

fn mk(s: &Term, p: &Term, o: &Term) -> Triple {
    Triple {
        subject: s.clone(),
        predicate: p.clone(),
        object: o.clone(),
    }
}

impl Extend<Triple> for TripleStore {
    /// Panics if the store is frozen.
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t).expect("extend on a frozen store");
        }
    }
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut store = TripleStore::new();
        store.extend(iter);
        store
    }
}

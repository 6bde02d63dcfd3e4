//! Open311 vocabulary, typed views over the instance graph, and fixture
//! loading with structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::rdf::{Term, TripleStore, RDF_TYPE};
use crate::turtle::{parse_document, PrefixMap};

macro_rules! o311 {
    ($local:literal) => {
        concat!("http://ontology.eil.utoronto.ca/open311.owl#", $local)
    };
}

/// IRIs of the Open311 ontology terms this engine reads.
pub mod vocab {
    pub const NS: &str = o311!("");
    pub const PREFIX: &str = "O3110";

    pub const OPEN311_THING: &str = o311!("Open311Thing");
    pub const AGENCY: &str = o311!("Agency");
    pub const SUBJECT: &str = o311!("Subject");
    pub const LOCATION: &str = o311!("Location");
    pub const TYPE311: &str = o311!("Type311");
    pub const ACTION311: &str = o311!("Action311");

    pub const HAS_ADDRESS: &str = o311!("hasAddress");
    pub const HAS_311_SUBJECT: &str = o311!("has311Subject");
    pub const HAS_311_TYPE: &str = o311!("has311Type");
    pub const NEED_311_ACTION: &str = o311!("need311Action");
    pub const IS_HANDLED_BY: &str = o311!("isHandledBy");

    pub const CONTACT_EMAIL: &str = o311!("contactEmail");
    pub const CONTACT_PHONE: &str = o311!("contactPhone");
    pub const GOVERNING_BODY: &str = o311!("governingBody");

    pub use crate::rdf::{RDFS_LABEL, RDF_TYPE};

    /// The five assertions every thing carries, with the class its object
    /// must belong to.
    pub const THING_PROPERTIES: [(&str, &str); 5] = [
        (HAS_ADDRESS, LOCATION),
        (HAS_311_SUBJECT, SUBJECT),
        (HAS_311_TYPE, TYPE311),
        (NEED_311_ACTION, ACTION311),
        (IS_HANDLED_BY, AGENCY),
    ];

    pub fn iri(local: &str) -> String {
        format!("{NS}{local}")
    }
}

/// `Term` for a known-good IRI constant.
pub fn node(iri: &str) -> Term {
    Term::Iri(iri.to_string())
}

pub fn prefixes() -> PrefixMap {
    let mut p = PrefixMap::new();
    p.insert(vocab::PREFIX, vocab::NS);
    p.insert("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#");
    p.insert("rdfs", "http://www.w3.org/2000/01/rdf-schema#");
    p.insert("owl", "http://www.w3.org/2002/07/owl#");
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    Missing,
    Duplicate,
    /// Object is not an instance of the property's range class.
    WrongClass,
    /// Subject carries thing properties but is not typed `Open311Thing`.
    Untyped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub thing: String,
    pub property: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prop = crate::rdf::local_part(&self.property);
        let thing = crate::rdf::local_part(&self.thing);
        let kind = match self.kind {
            ViolationKind::Missing => "missing",
            ViolationKind::Duplicate => "duplicate",
            ViolationKind::WrongClass => "object has wrong class",
            ViolationKind::Untyped => "not typed Open311Thing",
        };
        write!(f, "{thing}: {prop}: {kind}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{} is not a valid Open311 thing: {}", .thing, .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidThing {
        thing: String,
        violations: Vec<Violation>,
    },
    #[error("{0} is not an Agency")]
    UnknownAgency(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThingView {
    pub thing: Term,
    pub address: Term,
    pub subject: Term,
    pub type311: Term,
    pub action: Term,
    pub agency: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContactCard {
    pub agency: String,
    pub label: String,
    pub email: String,
    pub phone: String,
    pub governing_body: String,
}

fn has_type(store: &TripleStore, node: &Term, class: &str) -> bool {
    let rdf_type = Term::Iri(RDF_TYPE.to_string());
    store.objects(node, &rdf_type).any(|c| c.value() == class)
}

/// Check the five property assertions of `thing`.
pub fn validate_thing(store: &TripleStore, thing: &Term) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (property, class) in vocab::THING_PROPERTIES {
        let predicate = node(property);
        let objects: Vec<_> = store.objects(thing, &predicate).collect();
        let mut push = |kind| {
            violations.push(Violation {
                thing: thing.value().to_string(),
                property: property.to_string(),
                kind,
            })
        };
        match objects.as_slice() {
            [] => push(ViolationKind::Missing),
            [one] if !has_type(store, one, class) => push(ViolationKind::WrongClass),
            [_] => {}
            _ => push(ViolationKind::Duplicate),
        }
    }
    violations
}

pub fn thing_view(store: &TripleStore, thing: &Term) -> Result<ThingView, ModelError> {
    let violations = validate_thing(store, thing);
    if !violations.is_empty() {
        return Err(ModelError::InvalidThing {
            thing: thing.value().to_string(),
            violations,
        });
    }
    let one = |property: &str| {
        store
            .objects(thing, &node(property))
            .next()
            .cloned()
            .expect("validated")
    };
    Ok(ThingView {
        thing: thing.clone(),
        address: one(vocab::HAS_ADDRESS),
        subject: one(vocab::HAS_311_SUBJECT),
        type311: one(vocab::HAS_311_TYPE),
        action: one(vocab::NEED_311_ACTION),
        agency: one(vocab::IS_HANDLED_BY),
    })
}

pub fn agency_contact(store: &TripleStore, agency: &Term) -> Result<ContactCard, ModelError> {
    if !has_type(store, agency, vocab::AGENCY) {
        return Err(ModelError::UnknownAgency(agency.value().to_string()));
    }
    let literal = |property: &str| {
        store
            .objects(agency, &node(property))
            .find(|o| !o.is_iri())
            .map(|o| o.value().to_string())
            .unwrap_or_default()
    };
    Ok(ContactCard {
        agency: agency.value().to_string(),
        label: store.display_label(agency),
        email: literal(vocab::CONTACT_EMAIL),
        phone: literal(vocab::CONTACT_PHONE),
        governing_body: literal(vocab::GOVERNING_BODY),
    })
}

/// Instances of `class`, in IRI order.
pub fn instances_of(store: &TripleStore, class: &str) -> Vec<Term> {
    store
        .subjects(&node(RDF_TYPE), &node(class))
        .cloned()
        .collect()
}

/// Things typed `Open311Thing`, in IRI order.
pub fn things(store: &TripleStore) -> Vec<Term> {
    instances_of(store, vocab::OPEN311_THING)
}

pub fn agencies(store: &TripleStore) -> Vec<Term> {
    instances_of(store, vocab::AGENCY)
}

/// Every structural problem in the graph: violations of typed things, and
/// untyped subjects that carry thing properties.
pub fn validate_store(store: &TripleStore) -> Vec<Violation> {
    let mut out = Vec::new();
    let typed = things(store);
    for thing in &typed {
        out.extend(validate_thing(store, thing));
    }
    let mut untyped = BTreeSet::new();
    for (property, _) in vocab::THING_PROPERTIES {
        let predicate = node(property);
        for t in store.iter().filter(|t| t.predicate() == &predicate) {
            if !typed.contains(t.subject()) {
                untyped.insert(t.subject().clone());
            }
        }
    }
    for thing in untyped {
        out.push(Violation {
            thing: thing.value().to_string(),
            property: RDF_TYPE.to_string(),
            kind: ViolationKind::Untyped,
        });
    }
    out
}

/// One service offered: a subject, where it is served, and who handles it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceEntry {
    pub subject: Term,
    pub locations: Vec<Term>,
    pub agency: Term,
    pub action: Term,
}

/// Service catalogue derived from the thing views, one entry per
/// (subject, agency, action) with the locations it covers. Invalid things
/// are skipped.
pub fn services(store: &TripleStore) -> Vec<ServiceEntry> {
    let mut grouped: BTreeMap<(Term, Term, Term), Vec<Term>> = BTreeMap::new();
    for thing in things(store) {
        if let Ok(view) = thing_view(store, &thing) {
            grouped
                .entry((view.subject, view.agency, view.action))
                .or_default()
                .push(view.address);
        }
    }
    grouped
        .into_iter()
        .map(|((subject, agency, action), mut locations)| {
            locations.sort();
            locations.dedup();
            ServiceEntry {
                subject,
                locations,
                agency,
                action,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureName {
    Replica,
    Full,
}

impl FixtureName {
    /// Path relative to the crate root.
    pub fn path(self) -> &'static str {
        match self {
            FixtureName::Replica => "fixtures/replica.ttl",
            FixtureName::Full => "fixtures/full.ttl",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            FixtureName::Replica => include_str!("../fixtures/replica.ttl"),
            FixtureName::Full => include_str!("../fixtures/full.ttl"),
        }
    }

    pub fn expected_thing_count(self) -> usize {
        match self {
            FixtureName::Replica => 11,
            FixtureName::Full => 48,
        }
    }
}

impl FromStr for FixtureName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replica" => Ok(FixtureName::Replica),
            "full" => Ok(FixtureName::Full),
            other => Err(format!(
                "unknown fixture '{other}' (expected replica or full)"
            )),
        }
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixtureName::Replica => "replica",
            FixtureName::Full => "full",
        })
    }
}

/// A built-in fixture or a Turtle file on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FixtureSource {
    Named(FixtureName),
    File(PathBuf),
}

impl FromStr for FixtureSource {
    type Err = String;

    /// `replica` or `full`, otherwise anything ending in `.ttl` is a path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<FixtureName>() {
            Ok(name) => Ok(FixtureSource::Named(name)),
            Err(_) if s.ends_with(".ttl") => Ok(FixtureSource::File(PathBuf::from(s))),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fixture {source_name} is invalid:\n  {}", .problems.join("\n  "))]
pub struct FixtureInvalid {
    pub source_name: String,
    pub problems: Vec<String>,
}

pub fn load_fixture(name: FixtureName) -> Result<TripleStore, FixtureInvalid> {
    load_text(
        &name.to_string(),
        name.source(),
        Some(name.expected_thing_count()),
    )
}

pub fn load_fixture_file(path: &Path) -> Result<TripleStore, FixtureInvalid> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| FixtureInvalid {
        source_name: display.clone(),
        problems: vec![e.to_string()],
    })?;
    load_text(&display, &text, None)
}

pub fn load_source(source: &FixtureSource) -> Result<TripleStore, FixtureInvalid> {
    match source {
        FixtureSource::Named(name) => load_fixture(*name),
        FixtureSource::File(path) => load_fixture_file(path),
    }
}

/// Parse, validate and freeze. With `expected_things`, the thing count must
/// match exactly.
pub fn load_text(
    source_name: &str,
    text: &str,
    expected_things: Option<usize>,
) -> Result<TripleStore, FixtureInvalid> {
    let invalid = |problems| FixtureInvalid {
        source_name: source_name.to_string(),
        problems,
    };
    let (triples, _) = parse_document(text, &PrefixMap::new())
        .map_err(|e| invalid(e.0.iter().map(ToString::to_string).collect()))?;
    let store: TripleStore = triples.into_iter().collect();

    let mut problems: Vec<String> = validate_store(&store)
        .iter()
        .map(ToString::to_string)
        .collect();
    if let Some(expected) = expected_things {
        let found = things(&store).len();
        if found != expected {
            problems.push(format!("expected {expected} things, found {found}"));
        }
    }
    if problems.is_empty() {
        Ok(store.freeze())
    } else {
        Err(invalid(problems))
    }
}

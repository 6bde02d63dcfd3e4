//! Open311 civic-event engine.
//!
//! Loads an Open311 instance graph into an in-memory triple store, answers
//! basic-graph-pattern queries over it, turns citizen complaints written in
//! plain English into a filled-in query, and records the resulting service
//! requests in an append-only ledger.

pub mod api;
pub mod ledger;
pub mod model;
pub mod nlq;
pub mod rdf;
pub mod sparql;
mod syntax;
pub mod turtle;

pub use ledger::{Ledger, ServiceRequest, Status};
pub use model::{load_fixture, FixtureName};
pub use nlq::{answer_complaint, AliasDictionary, Resolution};
pub use rdf::{Term, Triple, TriplePattern, TripleStore};
pub use sparql::{evaluate, parse_query, ResultTable};
pub use syntax::{ParseDiagnostic, ParseError, PrefixMap, Severity};

#![allow(dead_code)]

use std::path::PathBuf;

use civic311::rdf::PatternTerm;
use civic311::sparql::{Projection, QueryAst};
use civic311::{PrefixMap, Term, Triple, TriplePattern};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const O311: &str = "http://ontology.eil.utoronto.ca/open311.owl#";

pub fn o(local: &str) -> Term {
    Term::Iri(format!("{O311}{local}"))
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

/// Non-comment lines of a tab-separated file, split into fields.
pub fn read_tsv(name: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(data_file(name))
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

// Small vocabularies so random patterns actually join.

const NODES: usize = 6;
const PREDICATES: usize = 3;
const LITERALS: [&str; 3] = ["a", "b", "two words"];

pub fn node(i: usize) -> Term {
    Term::Iri(format!("http://example.org/n{i}"))
}

pub fn predicate(i: usize) -> Term {
    Term::Iri(format!("http://example.org/p{i}"))
}

fn random_object(r: &mut StdRng) -> Term {
    if r.gen_bool(0.25) {
        Term::literal(*LITERALS.choose(r).unwrap())
    } else {
        node(r.gen_range(0..NODES))
    }
}

pub fn random_store(r: &mut StdRng, max: usize) -> Vec<Triple> {
    let n = r.gen_range(0..=max);
    (0..n)
        .map(|_| {
            Triple::new(
                node(r.gen_range(0..NODES)),
                predicate(r.gen_range(0..PREDICATES)),
                random_object(r),
            )
            .unwrap()
        })
        .collect()
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];

fn slot(r: &mut StdRng, constant: impl FnOnce(&mut StdRng) -> Term) -> PatternTerm {
    if r.gen_bool(0.55) {
        PatternTerm::var(*VARS.choose(r).unwrap())
    } else {
        PatternTerm::Bound(constant(r))
    }
}

pub fn random_query(r: &mut StdRng, max_patterns: usize) -> QueryAst {
    let k = r.gen_range(1..=max_patterns);
    let patterns: Vec<TriplePattern> = (0..k)
        .map(|_| TriplePattern {
            // One extra node id that never appears in stores.
            subject: slot(r, |r| node(r.gen_range(0..=NODES))),
            predicate: slot(r, |r| predicate(r.gen_range(0..PREDICATES))),
            object: slot(r, random_object),
        })
        .collect();
    let mut vars: Vec<String> = Vec::new();
    for v in patterns.iter().flat_map(TriplePattern::variables) {
        if !vars.iter().any(|x| x == v) {
            vars.push(v.to_string());
        }
    }
    let projection = if vars.is_empty() || r.gen_bool(0.3) {
        Projection::Star
    } else {
        let mut chosen: Vec<String> = vars.iter().filter(|_| r.gen_bool(0.6)).cloned().collect();
        if chosen.is_empty() {
            chosen.push(vars[0].clone());
        }
        chosen.shuffle(r);
        Projection::Vars(chosen)
    };
    QueryAst {
        prefixes: PrefixMap::new(),
        projection,
        patterns,
    }
}

enum Slot<'a> {
    Const(&'a Term),
    Var(usize),
}

/// Exhaustive answer: every k-tuple of store triples, one per pattern, that
/// admits a consistent assignment, projected and sorted.
pub fn brute_force(query: &QueryAst, store: &[Triple]) -> Vec<Vec<Term>> {
    let mut store: Vec<Triple> = store.to_vec();
    store.sort();
    store.dedup();
    let columns = query.columns();
    let mut names: Vec<&str> = Vec::new();
    let patterns: Vec<[Slot; 3]> = query
        .patterns
        .iter()
        .map(|p| {
            [&p.subject, &p.predicate, &p.object].map(|pos| match pos {
                PatternTerm::Bound(c) => Slot::Const(c),
                PatternTerm::Var(v) => Slot::Var(match names.iter().position(|n| n == v) {
                    Some(i) => i,
                    None => {
                        names.push(v);
                        names.len() - 1
                    }
                }),
            })
        })
        .collect();
    let out: Vec<usize> = columns
        .iter()
        .map(|c| names.iter().position(|n| n == c).unwrap())
        .collect();
    let k = patterns.len();
    let mut rows = Vec::new();
    if store.is_empty() {
        return rows;
    }
    let mut idx = vec![0usize; k];
    let mut assignment: Vec<Option<&Term>> = vec![None; names.len()];
    'outer: loop {
        assignment.iter_mut().for_each(|a| *a = None);
        let mut ok = true;
        'check: for (pattern, &i) in patterns.iter().zip(&idx) {
            let t = &store[i];
            for (slot, value) in pattern.iter().zip([t.subject(), t.predicate(), t.object()]) {
                match *slot {
                    Slot::Const(c) => {
                        if c != value {
                            ok = false;
                            break 'check;
                        }
                    }
                    Slot::Var(v) => match assignment[v] {
                        Some(prev) if prev != value => {
                            ok = false;
                            break 'check;
                        }
                        Some(_) => {}
                        None => assignment[v] = Some(value),
                    },
                }
            }
        }
        if ok {
            rows.push(
                out.iter()
                    .map(|&i| assignment[i].unwrap().clone())
                    .collect(),
            );
        }
        for d in (0..k).rev() {
            idx[d] += 1;
            if idx[d] < store.len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    rows.sort();
    rows
}

/// Literal text exercising the escapes and some non-ASCII.
pub fn random_literal(r: &mut StdRng) -> String {
    const PIECES: [&str; 12] = [
        "plain",
        " ",
        "\"",
        "\\",
        "\n",
        "\t",
        "é",
        "नमस्ते",
        "#",
        "<x>",
        "'",
        ".",
    ];
    let n = r.gen_range(0..6);
    (0..n).map(|_| *PIECES.choose(r).unwrap()).collect()
}

pub fn random_iri(r: &mut StdRng) -> Term {
    let ns = [
        O311,
        "http://example.org/ns/",
        "urn:x:",
        "http://other.example/path/",
    ];
    let local = ["Thing", "a", "b-1", "c_2", "x.y", "Z9", "p%20q", "tail/"];
    Term::Iri(format!(
        "{}{}{}",
        ns.choose(r).unwrap(),
        local.choose(r).unwrap(),
        r.gen_range(0..5)
    ))
}

pub fn random_triple_set(r: &mut StdRng) -> Vec<Triple> {
    let n = r.gen_range(0..30);
    let mut out: Vec<Triple> = (0..n)
        .map(|_| {
            let object = if r.gen_bool(0.4) {
                Term::literal(random_literal(r))
            } else {
                random_iri(r)
            };
            Triple::new(random_iri(r), random_iri(r), object).unwrap()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

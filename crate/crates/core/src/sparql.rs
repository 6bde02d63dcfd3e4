//! Basic-graph-pattern SELECT queries.
//!
//! Grammar:
//!
//! ```text
//! query      := ("PREFIX" label ":" <iri>)* "SELECT" ("*" | ?var+) "WHERE" "{" pattern ("." pattern)* "."? "}"
//! pattern    := term term term
//! term       := ?var | prefixed:name | <iri> | "literal" | a
//! ```
//!
//! Keywords are case-insensitive; variable names are not. Evaluation is a
//! left-to-right nested-loop join with bag semantics: no implicit DISTINCT.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::rdf::{Binding, PatternTerm, Term, TriplePattern, TripleStore, RDF_TYPE};
use crate::syntax::{tokenize, ParseDiagnostic, ParseError, Pos, PrefixMap, Tok, TokenStream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Star,
    Vars(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub prefixes: PrefixMap,
    pub projection: Projection,
    pub patterns: Vec<TriplePattern>,
}

impl QueryAst {
    /// Output columns: the projected variables, or for `*` every variable
    /// in order of first appearance in the WHERE block.
    pub fn columns(&self) -> Vec<String> {
        match &self.projection {
            Projection::Vars(v) => v.clone(),
            Projection::Star => {
                let mut seen = Vec::<String>::new();
                for var in self.patterns.iter().flat_map(TriplePattern::variables) {
                    if !seen.iter().any(|s| s == var) {
                        seen.push(var.to_string());
                    }
                }
                seen
            }
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, ns) in self.prefixes.iter() {
            writeln!(f, "PREFIX {label}: <{ns}>")?;
        }
        f.write_str("SELECT")?;
        match &self.projection {
            Projection::Star => f.write_str(" *")?,
            Projection::Vars(vars) => {
                for v in vars {
                    write!(f, " ?{v}")?;
                }
            }
        }
        f.write_str(" WHERE {\n")?;
        for (i, p) in self.patterns.iter().enumerate() {
            let sep = if i + 1 < self.patterns.len() {
                " ."
            } else {
                ""
            };
            writeln!(f, "  {p}{sep}")?;
        }
        f.write_str("}\n")
    }
}

pub fn parse_query(text: &str) -> Result<QueryAst, ParseError> {
    let tokens = tokenize(text)?;
    let mut ts = TokenStream::new(tokens, text);
    parse_tokens(&mut ts).map_err(|d| ParseError(vec![d]))
}

fn is_keyword(tok: Option<&Tok>, kw: &str) -> bool {
    matches!(tok, Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
}

fn parse_tokens(ts: &mut TokenStream) -> Result<QueryAst, ParseDiagnostic> {
    let mut prefixes = PrefixMap::new();
    while is_keyword(ts.peek().map(|t| &t.tok), "PREFIX") {
        ts.next();
        let pos = ts.pos();
        let label = match ts.next().map(|t| t.tok) {
            Some(Tok::PName { prefix, local }) if local.is_empty() => prefix,
            _ => {
                return Err(ParseDiagnostic::error(
                    pos,
                    "expected prefix label such as 'ex:'",
                ))
            }
        };
        let pos = ts.pos();
        match ts.next().map(|t| t.tok) {
            Some(Tok::Iri(ns)) => prefixes.insert(label, ns),
            _ => return Err(ParseDiagnostic::error(pos, "expected namespace IRI")),
        }
    }

    if !is_keyword(ts.peek().map(|t| &t.tok), "SELECT") {
        return Err(ts.unexpected("SELECT"));
    }
    ts.next();

    let mut projected: Vec<(String, Pos)> = Vec::new();
    let star = ts.eat(&Tok::Star);
    if !star {
        while let Some(Tok::Var(v)) = ts.peek().map(|t| t.tok.clone()) {
            let pos = ts.pos();
            if projected.iter().any(|(p, _)| *p == v) {
                return Err(ParseDiagnostic::error(
                    pos,
                    format!("variable ?{v} projected twice"),
                ));
            }
            projected.push((v, pos));
            ts.next();
        }
        if projected.is_empty() {
            return Err(ts.unexpected("'*' or a projected variable"));
        }
    }

    if !is_keyword(ts.peek().map(|t| &t.tok), "WHERE") {
        return Err(ts.unexpected("WHERE"));
    }
    ts.next();
    ts.expect(&Tok::LBrace, "'{'")?;

    let mut patterns = Vec::new();
    loop {
        if ts.peek().is_some_and(|t| t.tok == Tok::RBrace) {
            if patterns.is_empty() {
                return Err(ParseDiagnostic::error(ts.pos(), "empty WHERE block"));
            }
            ts.next();
            break;
        }
        let s = pattern_term(ts, &prefixes, false)?;
        let p = pattern_term(ts, &prefixes, true)?;
        let o = pattern_term(ts, &prefixes, false)?;
        patterns.push(TriplePattern::new(s, p, o));
        if !ts.eat(&Tok::Dot) && !ts.peek().is_some_and(|t| t.tok == Tok::RBrace) {
            return Err(ts.unexpected("'.' or '}'"));
        }
    }
    if !ts.at_end() {
        return Err(ts.unexpected("end of query"));
    }

    let ast = QueryAst {
        prefixes,
        projection: if star {
            Projection::Star
        } else {
            Projection::Vars(projected.iter().map(|(v, _)| v.clone()).collect())
        },
        patterns,
    };
    for (var, pos) in &projected {
        if !ast.patterns.iter().any(|p| p.variables().any(|v| v == var)) {
            return Err(ParseDiagnostic::error(
                *pos,
                format!("projected variable ?{var} does not occur in WHERE"),
            ));
        }
    }
    Ok(ast)
}

fn pattern_term(
    ts: &mut TokenStream,
    prefixes: &PrefixMap,
    predicate: bool,
) -> Result<PatternTerm, ParseDiagnostic> {
    let pos = ts.pos();
    let tok = ts.peek().map(|t| t.tok.clone());
    let term = match tok {
        Some(Tok::Var(v)) => PatternTerm::Var(v),
        Some(Tok::Iri(v)) => PatternTerm::Bound(
            Term::iri(v).map_err(|e| ParseDiagnostic::error(pos, e.to_string()))?,
        ),
        Some(Tok::PName { prefix, local }) => {
            let iri = prefixes.resolve(&prefix, &local).ok_or_else(|| {
                ParseDiagnostic::error(pos, format!("unknown prefix '{prefix}:'"))
            })?;
            PatternTerm::Bound(
                Term::iri(iri).map_err(|e| ParseDiagnostic::error(pos, e.to_string()))?,
            )
        }
        Some(Tok::Literal(v)) if !predicate => PatternTerm::Bound(Term::Literal(v)),
        Some(Tok::Word(w)) if predicate && w == "a" => {
            PatternTerm::Bound(Term::Iri(RDF_TYPE.to_string()))
        }
        _ => return Err(ts.unexpected("a variable, IRI, prefixed name or literal")),
    };
    ts.next();
    Ok(term)
}

/// Replace every variable bound in `binding` by its value.
pub fn substitute(pattern: &TriplePattern, binding: &Binding) -> TriplePattern {
    let sub = |p: &PatternTerm| match p {
        PatternTerm::Var(v) => binding
            .get(v)
            .map_or_else(|| p.clone(), |t| PatternTerm::Bound(t.clone())),
        PatternTerm::Bound(_) => p.clone(),
    };
    TriplePattern {
        subject: sub(&pattern.subject),
        predicate: sub(&pattern.predicate),
        object: sub(&pattern.object),
    }
}

/// A bag of solution rows, each row aligned with `columns`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultTable {
    columns: Vec<String>,
    rows: Vec<Vec<Term>>,
}

impl ResultTable {
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Rows in lexicographic order.
    pub fn rows(&self) -> &[Vec<Term>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column values of each row, keyed by variable name.
    pub fn bindings(&self) -> impl Iterator<Item = BTreeMap<&str, &Term>> {
        self.rows
            .iter()
            .map(|row| self.columns.iter().map(String::as_str).zip(row).collect())
    }

    /// Tab-separated table: header row of variable names, then one line per
    /// row with IRIs shortened to their local name and literals quoted.
    pub fn render(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<_> = row.iter().map(Term::local_name).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

impl Serialize for ResultTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct Row<'a>(&'a [String], &'a [Term]);
        impl Serialize for Row<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (c, t) in self.0.iter().zip(self.1) {
                    map.serialize_entry(c, t)?;
                }
                map.end()
            }
        }
        let rows: Vec<_> = self.rows.iter().map(|r| Row(&self.columns, r)).collect();
        let mut s = serializer.serialize_struct("ResultTable", 2)?;
        s.serialize_field("columns", &self.columns)?;
        s.serialize_field("rows", &rows)?;
        s.end()
    }
}

/// Evaluate `ast` over `store`. The store is expected to be frozen; an
/// unsatisfiable query yields an empty table.
pub fn evaluate(ast: &QueryAst, store: &TripleStore) -> ResultTable {
    let mut solutions = vec![Binding::new()];
    for pattern in &ast.patterns {
        let mut next = Vec::new();
        for current in &solutions {
            let grounded = substitute(pattern, current);
            for (_, extension) in store.match_pattern(&grounded) {
                let merged = current
                    .merge(&extension)
                    .expect("substituted pattern cannot conflict with its binding");
                next.push(merged);
            }
        }
        solutions = next;
        if solutions.is_empty() {
            break;
        }
    }

    let columns = ast.columns();
    let mut rows: Vec<Vec<Term>> = solutions
        .iter()
        .map(|b| {
            columns
                .iter()
                .map(|c| {
                    b.get(c)
                        .cloned()
                        .expect("projected variables occur in every pattern row")
                })
                .collect()
        })
        .collect();
    rows.sort();
    ResultTable { columns, rows }
}

/// Parse and evaluate in one step.
pub fn run_query(text: &str, store: &TripleStore) -> Result<ResultTable, ParseError> {
    parse_query(text).map(|ast| evaluate(&ast, store))
}

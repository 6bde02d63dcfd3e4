//! Reader and writer for the Turtle subset used by the fixture files.
//!
//! Supported: `@prefix`, `<absolute-iri>`, prefixed names, `a`, `;`
//! predicate lists, `,` object lists, double-quoted literals with
//! `\"`, `\\`, `\n` and `\t` escapes, `#` comments. No blank nodes,
//! collections, numeric literals, datatypes or language tags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::rdf::{Term, Triple, RDF_TYPE};
use crate::syntax::{tokenize, Pos, Tok, TokenStream};
pub use crate::syntax::{ParseDiagnostic, ParseError, PrefixMap, Severity};

/// Parse a whole document. Either every statement parses or nothing is
/// returned. Prefixes declared in the document are layered over `base`.
pub fn parse_document(
    text: &str,
    base: &PrefixMap,
) -> Result<(Vec<Triple>, PrefixMap), ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        ts: TokenStream::new(tokens, text),
        prefixes: base.clone(),
        triples: Vec::new(),
    };
    while !parser.ts.at_end() {
        parser.statement().map_err(|d| ParseError(vec![d]))?;
    }
    Ok((parser.triples, parser.prefixes))
}

struct Parser {
    ts: TokenStream,
    prefixes: PrefixMap,
    triples: Vec<Triple>,
}

type PResult<T> = Result<T, ParseDiagnostic>;

impl Parser {
    fn statement(&mut self) -> PResult<()> {
        if self.ts.eat(&Tok::PrefixDirective) {
            let pos = self.ts.pos();
            let label = match self.ts.next().map(|t| t.tok) {
                Some(Tok::PName { prefix, local }) if local.is_empty() => prefix,
                _ => {
                    return Err(ParseDiagnostic::error(
                        pos,
                        "expected prefix label such as 'ex:'",
                    ))
                }
            };
            let pos = self.ts.pos();
            let ns = match self.ts.next().map(|t| t.tok) {
                Some(Tok::Iri(v)) => absolute(v, pos)?,
                _ => return Err(ParseDiagnostic::error(pos, "expected namespace IRI")),
            };
            self.prefixes.insert(label, ns);
            self.ts.expect(&Tok::Dot, "'.' after prefix declaration")?;
            return Ok(());
        }

        let subject = self.iri_term("subject")?;
        loop {
            let predicate = if self.ts.eat(&Tok::Word("a".into())) {
                Term::Iri(RDF_TYPE.to_string())
            } else {
                self.iri_term("predicate")?
            };
            loop {
                let object = self.object()?;
                let triple = Triple::new(subject.clone(), predicate.clone(), object)
                    .expect("subject and predicate are IRIs");
                self.triples.push(triple);
                if !self.ts.eat(&Tok::Comma) {
                    break;
                }
            }
            if !self.ts.eat(&Tok::Semicolon) {
                break;
            }
            // A trailing ';' before '.' is legal Turtle.
            if self.ts.peek().is_some_and(|t| t.tok == Tok::Dot) {
                break;
            }
        }
        self.ts.expect(&Tok::Dot, "'.' at end of statement")?;
        Ok(())
    }

    fn iri_term(&mut self, role: &str) -> PResult<Term> {
        let pos = self.ts.pos();
        match self.ts.peek().map(|t| t.tok.clone()) {
            Some(Tok::Iri(v)) => {
                self.ts.next();
                Ok(Term::Iri(absolute(v, pos)?))
            }
            Some(Tok::PName { prefix, local }) => {
                self.ts.next();
                self.resolve(&prefix, &local, pos)
            }
            _ => Err(self.ts.unexpected(&format!("{role} IRI or prefixed name"))),
        }
    }

    fn object(&mut self) -> PResult<Term> {
        if let Some(Tok::Literal(v)) = self.ts.peek().map(|t| t.tok.clone()) {
            self.ts.next();
            return Ok(Term::Literal(v));
        }
        self.iri_term("object")
    }

    fn resolve(&self, prefix: &str, local: &str, pos: Pos) -> PResult<Term> {
        let iri = self
            .prefixes
            .resolve(prefix, local)
            .ok_or_else(|| ParseDiagnostic::error(pos, format!("unknown prefix '{prefix}:'")))?;
        Term::iri(iri).map_err(|e| ParseDiagnostic::error(pos, e.to_string()))
    }
}

fn absolute(iri: String, pos: Pos) -> PResult<String> {
    if iri.contains(':') {
        Ok(iri)
    } else {
        Err(ParseDiagnostic::error(
            pos,
            format!("relative IRI <{iri}> is not supported"),
        ))
    }
}

/// Serialize triples grouped by subject. The output reparses to the same
/// triple set.
pub fn serialize<'a>(
    triples: impl IntoIterator<Item = &'a Triple>,
    prefixes: &PrefixMap,
) -> String {
    let mut out = String::new();
    for (label, ns) in prefixes.iter() {
        let _ = writeln!(out, "@prefix {label}: <{ns}> .");
    }

    let mut grouped: BTreeMap<&Term, BTreeMap<&Term, Vec<&Term>>> = BTreeMap::new();
    for t in triples {
        grouped
            .entry(t.subject())
            .or_default()
            .entry(t.predicate())
            .or_default()
            .push(t.object());
    }
    if !grouped.is_empty() && !prefixes.is_empty() {
        out.push('\n');
    }

    for (subject, predicates) in grouped {
        out.push_str(&render(subject, prefixes));
        let count = predicates.len();
        for (i, (predicate, mut objects)) in predicates.into_iter().enumerate() {
            objects.sort();
            objects.dedup();
            let pred = if predicate.value() == RDF_TYPE {
                "a".to_string()
            } else {
                render(predicate, prefixes)
            };
            let objs: Vec<_> = objects.iter().map(|o| render(o, prefixes)).collect();
            let sep = if i + 1 == count { " ." } else { " ;" };
            let _ = writeln!(out, "\n    {pred} {}{sep}", objs.join(", "));
        }
    }
    out
}

fn render(term: &Term, prefixes: &PrefixMap) -> String {
    match term {
        Term::Iri(v) => prefixes.compact(v).unwrap_or_else(|| format!("<{v}>")),
        Term::Literal(_) => term.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Triple>, ParseError> {
        parse_document(text, &PrefixMap::new()).map(|(t, _)| t)
    }

    #[test]
    fn single_prefixed_triple() {
        let triples = parse("@prefix o: <http://x/> . o:a o:b o:c .").unwrap();
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].subject().value(), "http://x/a");
        assert_eq!(triples[0].predicate().value(), "http://x/b");
        assert_eq!(triples[0].object().value(), "http://x/c");
    }

    #[test]
    fn predicate_and_object_lists() {
        let doc = r#"
            @prefix o: <http://x/> .
            o:t a o:Thing ;
                o:p o:x, o:y ;
                o:label "Street Light" .
        "#;
        let triples = parse(doc).unwrap();
        assert_eq!(triples.len(), 4);
        assert_eq!(triples[0].predicate().value(), RDF_TYPE);
        assert_eq!(triples[3].object(), &Term::literal("Street Light"));
    }

    #[test]
    fn base_prefixes_are_used_and_overridable() {
        let mut base = PrefixMap::new();
        base.insert("o", "http://base/");
        let (t, _) = parse_document("o:a o:b o:c .", &base).unwrap();
        assert_eq!(t[0].subject().value(), "http://base/a");
        let (t, p) = parse_document("@prefix o: <http://new/> . o:a o:b o:c .", &base).unwrap();
        assert_eq!(t[0].subject().value(), "http://new/a");
        assert_eq!(p.get("o"), Some("http://new/"));
    }

    #[test]
    fn unknown_prefix_is_positioned() {
        let err = parse("@prefix o: <http://x/> .\no:a q:b o:c .").unwrap_err();
        let d = &err.0[0];
        assert_eq!((d.line, d.column), (2, 5));
        assert!(d.message.contains("unknown prefix"));
    }

    #[test]
    fn missing_dot() {
        let err = parse("<http://x/a> <http://x/b> <http://x/c>").unwrap_err();
        assert!(err.0[0].message.contains("'.'"));
    }

    #[test]
    fn unterminated_literal() {
        let err = parse("<http://x/a> <http://x/b> \"open .").unwrap_err();
        assert!(err.0[0].message.contains("unterminated"));
        assert_eq!(err.0[0].column, 27);
    }

    #[test]
    fn all_or_nothing() {
        assert!(
            parse("<http://x/a> <http://x/b> <http://x/c> .\n<http://x/a> <http://x/b> .").is_err()
        );
    }

    #[test]
    fn literal_subject_is_error() {
        assert!(parse("\"x\" <http://x/b> <http://x/c> .").is_err());
    }

    #[test]
    fn relative_iri_rejected() {
        assert!(parse("<a> <http://x/b> <http://x/c> .").is_err());
    }

    #[test]
    fn duplicates_parse_silently() {
        let t = parse("<http://x/a> <http://x/b> <http://x/c>, <http://x/c> .").unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn serialize_empty_is_prefixes_only() {
        let mut p = PrefixMap::new();
        p.insert("o", "http://x/");
        assert_eq!(serialize(&[], &p), "@prefix o: <http://x/> .\n");
    }

    #[test]
    fn serialize_keeps_literal_bytes() {
        let t = Triple::new(
            Term::iri("http://x/StreetLight").unwrap(),
            Term::iri("http://x/label").unwrap(),
            Term::literal("Street Light"),
        )
        .unwrap();
        let mut p = PrefixMap::new();
        p.insert("o", "http://x/");
        let text = serialize([&t], &p);
        assert!(text.contains("\"Street Light\""));
        let (back, _) = parse_document(&text, &PrefixMap::new()).unwrap();
        assert_eq!(back, vec![t]);
    }
}

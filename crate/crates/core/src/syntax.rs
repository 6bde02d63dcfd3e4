//! Tokenizer shared by the Turtle reader and the query parser, plus the
//! positioned diagnostics both report.
//!
//! The whole input is tokenized before any parsing starts, and lexical
//! errors do not stop the scan: every bad character gets its own
//! diagnostic at its own position.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    pub(crate) fn error(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            severity: Severity::Error,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.column, sev, self.message
        )
    }
}

/// A failed parse. Always holds at least one error diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ParseError(pub Vec<ParseDiagnostic>);

impl ParseError {
    pub fn diagnostics(&self) -> &[ParseDiagnostic] {
        &self.0
    }
}

/// Prefix label → namespace IRI. The empty label is allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefixMap {
    entries: BTreeMap<String, String>,
}

impl PrefixMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Redefining a label replaces the old namespace.
    pub fn insert(&mut self, label: impl Into<String>, namespace: impl Into<String>) {
        self.entries.insert(label.into(), namespace.into());
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.entries.get(label).map(String::as_str)
    }

    pub fn resolve(&self, label: &str, local: &str) -> Option<String> {
        self.get(label).map(|ns| format!("{ns}{local}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Compact `iri` to `label:local` using the longest matching namespace,
    /// provided the remainder is a legal local name.
    pub fn compact(&self, iri: &str) -> Option<String> {
        self.entries
            .iter()
            .filter(|(_, ns)| iri.starts_with(ns.as_str()))
            .max_by_key(|(_, ns)| ns.len())
            .and_then(|(label, ns)| {
                let local = &iri[ns.len()..];
                local
                    .chars()
                    .all(is_local_char)
                    .then(|| format!("{label}:{local}"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Iri(String),
    PName {
        prefix: String,
        local: String,
    },
    Var(String),
    Literal(String),
    /// `@prefix`
    PrefixDirective,
    /// Bare word such as `a`, `PREFIX`, `SELECT`.
    Word(String),
    Dot,
    Semicolon,
    Comma,
    Star,
    LBrace,
    RBrace,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Iri(v) => write!(f, "<{v}>"),
            Tok::PName { prefix, local } => write!(f, "{prefix}:{local}"),
            Tok::Var(v) => write!(f, "?{v}"),
            Tok::Literal(_) => f.write_str("string literal"),
            Tok::PrefixDirective => f.write_str("@prefix"),
            Tok::Word(w) => f.write_str(w),
            Tok::Dot => f.write_str("'.'"),
            Tok::Semicolon => f.write_str("';'"),
            Tok::Comma => f.write_str("','"),
            Tok::Star => f.write_str("'*'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub(crate) fn is_local_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn is_word_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_iri_char(c: char) -> bool {
    !(c.is_whitespace()
        || c.is_control()
        || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
            pos: Pos { line: 1, column: 1 },
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|c| pred(*c)) {
            s.push(c);
            self.bump();
        }
        s
    }
}

/// Tokenize `text`. `#` starts a comment running to end of line.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor::new(text);
    let mut tokens = Vec::new();
    let mut diags = Vec::new();

    while let Some(c) = cur.peek() {
        let start = cur.pos;
        let single = |t: Tok| Some(Token { tok: t, pos: start });
        let token = match c {
            c if c.is_whitespace() => {
                cur.bump();
                None
            }
            '#' => {
                cur.take_while(|c| c != '\n');
                None
            }
            '.' | ';' | ',' | '*' | '{' | '}' => {
                cur.bump();
                single(match c {
                    '.' => Tok::Dot,
                    ';' => Tok::Semicolon,
                    ',' => Tok::Comma,
                    '*' => Tok::Star,
                    '{' => Tok::LBrace,
                    _ => Tok::RBrace,
                })
            }
            '<' => lex_iri(&mut cur, &mut diags).map(|v| Token {
                tok: Tok::Iri(v),
                pos: start,
            }),
            '"' => lex_literal(&mut cur, &mut diags).map(|v| Token {
                tok: Tok::Literal(v),
                pos: start,
            }),
            '?' => {
                cur.bump();
                let name = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                if name.is_empty() {
                    diags.push(ParseDiagnostic::error(
                        start,
                        "expected variable name after '?'",
                    ));
                    None
                } else {
                    single(Tok::Var(name))
                }
            }
            '@' => {
                cur.bump();
                let word = cur.take_while(|c| c.is_ascii_alphabetic());
                if word == "prefix" {
                    single(Tok::PrefixDirective)
                } else {
                    diags.push(ParseDiagnostic::error(
                        start,
                        format!("unsupported directive '@{word}'"),
                    ));
                    None
                }
            }
            ':' => {
                cur.bump();
                let local = cur.take_while(is_local_char);
                single(Tok::PName {
                    prefix: String::new(),
                    local,
                })
            }
            c if is_word_start(c) => {
                let word = cur.take_while(is_local_char);
                if cur.peek() == Some(':') {
                    cur.bump();
                    let local = cur.take_while(is_local_char);
                    single(Tok::PName {
                        prefix: word,
                        local,
                    })
                } else {
                    single(Tok::Word(word))
                }
            }
            other => {
                cur.bump();
                diags.push(ParseDiagnostic::error(
                    start,
                    format!("unexpected character {other:?}"),
                ));
                None
            }
        };
        tokens.extend(token);
    }

    if diags.is_empty() {
        Ok(tokens)
    } else {
        Err(ParseError(diags))
    }
}

fn lex_iri(cur: &mut Cursor<'_>, diags: &mut Vec<ParseDiagnostic>) -> Option<String> {
    let open = cur.pos;
    cur.bump();
    let mut value = String::new();
    let mut ok = true;
    loop {
        let here = cur.pos;
        match cur.peek() {
            None | Some('\n') => {
                diags.push(ParseDiagnostic::error(open, "unterminated IRI"));
                return None;
            }
            Some('>') => {
                cur.bump();
                break;
            }
            Some(c) if is_iri_char(c) => {
                value.push(c);
                cur.bump();
            }
            Some(c) => {
                diags.push(ParseDiagnostic::error(
                    here,
                    format!("illegal character {c:?} in IRI"),
                ));
                ok = false;
                cur.bump();
            }
        }
    }
    if value.is_empty() && ok {
        diags.push(ParseDiagnostic::error(open, "empty IRI"));
        return None;
    }
    ok.then_some(value)
}

fn lex_literal(cur: &mut Cursor<'_>, diags: &mut Vec<ParseDiagnostic>) -> Option<String> {
    let open = cur.pos;
    cur.bump();
    let mut value = String::new();
    let mut ok = true;
    loop {
        let here = cur.pos;
        match cur.bump() {
            None | Some('\n') => {
                diags.push(ParseDiagnostic::error(open, "unterminated string literal"));
                return None;
            }
            Some('"') => break,
            Some('\\') => match cur.peek() {
                Some(e @ ('"' | '\\' | 'n' | 't')) => {
                    cur.bump();
                    value.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                }
                _ => {
                    diags.push(ParseDiagnostic::error(here, "unsupported escape sequence"));
                    ok = false;
                }
            },
            Some(c) => value.push(c),
        }
    }
    ok.then_some(value)
}

/// Token stream with one-token lookahead, used by both parsers.
pub(crate) struct TokenStream {
    tokens: Vec<Token>,
    idx: usize,
    end: Pos,
}

impl TokenStream {
    pub fn new(tokens: Vec<Token>, text: &str) -> Self {
        let end = end_pos(text);
        Self {
            tokens,
            idx: 0,
            end,
        }
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx)
    }

    pub fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    /// Position of the next token, or end of input.
    pub fn pos(&self) -> Pos {
        self.peek().map_or(self.end, |t| t.pos)
    }

    pub fn at_end(&self) -> bool {
        self.idx >= self.tokens.len()
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().is_some_and(|t| &t.tok == tok) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok, what: &str) -> Result<Pos, ParseDiagnostic> {
        let pos = self.pos();
        if self.eat(tok) {
            Ok(pos)
        } else {
            Err(self.unexpected(what))
        }
    }

    pub fn unexpected(&self, expected: &str) -> ParseDiagnostic {
        match self.peek() {
            Some(t) => {
                ParseDiagnostic::error(t.pos, format!("expected {expected}, found {}", t.tok))
            }
            None => {
                ParseDiagnostic::error(self.end, format!("expected {expected}, found end of input"))
            }
        }
    }
}

fn end_pos(text: &str) -> Pos {
    let mut pos = Pos { line: 1, column: 1 };
    for c in text.chars() {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    }
    pos
}

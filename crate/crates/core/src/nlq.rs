//! Complaint text → (subject, location) slots → CQ-1 query → resolution.
//!
//! The pipeline is: normalize, lemmatize, drop stopwords (keeping a map
//! back to normalized positions), greedy longest-match against the alias
//! dictionary, then slot extraction. Ambiguity is always an error; nothing
//! is resolved by tie-breaking.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{self, vocab, ContactCard, ModelError};
use crate::rdf::{Term, TripleStore};
use crate::sparql;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Category {
    Subject,
    Location,
    Type311,
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Subject" => Ok(Category::Subject),
            "Location" => Ok(Category::Location),
            "Type311" => Ok(Category::Type311),
            other => Err(format!("unknown category '{other}'")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Subject => "Subject",
            Category::Location => "Location",
            Category::Type311 => "Type311",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasEntry {
    /// Normalized, lemmatized, stopword-free tokens.
    pub phrase: Vec<String>,
    pub category: Category,
    pub target: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DictionaryError {
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("alias '{phrase}' ({category}) maps to both {first} and {second}")]
    Conflict {
        phrase: String,
        category: Category,
        first: String,
        second: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Alias phrases, stopwords and lemma exceptions.
#[derive(Debug, Clone)]
pub struct AliasDictionary {
    entries: Vec<AliasEntry>,
    by_phrase: HashMap<Vec<String>, Vec<usize>>,
    longest: usize,
    stopwords: HashSet<String>,
    lemma_exceptions: HashMap<String, String>,
}

pub const ALIASES_FILE: &str = "aliases.tsv";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const LEMMA_EXCEPTIONS_FILE: &str = "lemma_exceptions.tsv";

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

impl AliasDictionary {
    /// The dictionary shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_sources(
            include_str!("../data/aliases.tsv"),
            include_str!("../data/stopwords.txt"),
            include_str!("../data/lemma_exceptions.tsv"),
        )
        .expect("built-in dictionary is well formed")
    }

    /// Load `aliases.tsv`, `stopwords.txt` and `lemma_exceptions.tsv` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, DictionaryError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| DictionaryError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        Self::from_sources(
            &read(ALIASES_FILE)?,
            &read(STOPWORDS_FILE)?,
            &read(LEMMA_EXCEPTIONS_FILE)?,
        )
    }

    /// Build from file contents. Alias phrases go through the same
    /// normalize/lemmatize/stopword pipeline as complaint text. Two lines
    /// that normalize to the same phrase and category must agree on the
    /// target; identical ones collapse into a single entry.
    pub fn from_sources(
        aliases: &str,
        stopwords: &str,
        exceptions: &str,
    ) -> Result<Self, DictionaryError> {
        let malformed = |file: &str, line, message: String| DictionaryError::Malformed {
            file: file.to_string(),
            line,
            message,
        };

        let stopwords: HashSet<String> = data_lines(stopwords)
            .map(|(_, l)| l.trim().to_lowercase())
            .collect();

        let mut lemma_exceptions = HashMap::new();
        for (line, text) in data_lines(exceptions) {
            let fields: Vec<_> = text.split('\t').map(str::trim).collect();
            match fields.as_slice() {
                [token, lemma] if !token.is_empty() && !lemma.is_empty() => {
                    lemma_exceptions.insert(token.to_lowercase(), lemma.to_lowercase());
                }
                _ => {
                    return Err(malformed(
                        LEMMA_EXCEPTIONS_FILE,
                        line,
                        "expected token<TAB>lemma".into(),
                    ))
                }
            }
        }

        let mut dict = AliasDictionary {
            entries: Vec::new(),
            by_phrase: HashMap::new(),
            longest: 0,
            stopwords,
            lemma_exceptions,
        };

        for (line, text) in data_lines(aliases) {
            let fields: Vec<_> = text.split('\t').collect();
            let [phrase, category, target] = fields.as_slice() else {
                return Err(malformed(
                    ALIASES_FILE,
                    line,
                    "expected phrase<TAB>category<TAB>target-iri".into(),
                ));
            };
            let category: Category = category
                .trim()
                .parse()
                .map_err(|e| malformed(ALIASES_FILE, line, e))?;
            let target = Term::iri(target.trim())
                .map_err(|e| malformed(ALIASES_FILE, line, e.to_string()))?;
            let tokens = dict.analyze(phrase).lemmas;
            if tokens.is_empty() {
                return Err(malformed(
                    ALIASES_FILE,
                    line,
                    format!("phrase '{phrase}' is empty after stopword removal"),
                ));
            }
            dict.add(AliasEntry {
                phrase: tokens,
                category,
                target,
            })?;
        }
        Ok(dict)
    }

    fn add(&mut self, entry: AliasEntry) -> Result<(), DictionaryError> {
        let slot = self.by_phrase.entry(entry.phrase.clone()).or_default();
        if let Some(&i) = slot
            .iter()
            .find(|&&i| self.entries[i].category == entry.category)
        {
            let existing = &self.entries[i];
            if existing.target == entry.target {
                return Ok(());
            }
            return Err(DictionaryError::Conflict {
                phrase: entry.phrase.join(" "),
                category: entry.category,
                first: existing.target.value().to_string(),
                second: entry.target.value().to_string(),
            });
        }
        slot.push(self.entries.len());
        self.longest = self.longest.max(entry.phrase.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[AliasEntry] {
        &self.entries
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Exception table first, then the first applicable suffix rule:
    /// `-ies`→`-y`, `-es`→∅ (len > 4), `-s`→∅ (len > 3, not `-ss`),
    /// `-ing`→∅ (len > 5), `-ed`→∅ (len > 4).
    pub fn lemmatize(&self, token: &str) -> String {
        if let Some(lemma) = self.lemma_exceptions.get(token) {
            return lemma.clone();
        }
        let len = token.chars().count();
        if let Some(stem) = token.strip_suffix("ies") {
            return format!("{stem}y");
        }
        if len > 4 {
            if let Some(stem) = token.strip_suffix("es") {
                return stem.to_string();
            }
        }
        if len > 3 && !token.ends_with("ss") {
            if let Some(stem) = token.strip_suffix('s') {
                return stem.to_string();
            }
        }
        if len > 5 {
            if let Some(stem) = token.strip_suffix("ing") {
                return stem.to_string();
            }
        }
        if len > 4 {
            if let Some(stem) = token.strip_suffix("ed") {
                return stem.to_string();
            }
        }
        token.to_string()
    }

    /// Normalize, lemmatize and drop stopwords. A token is a stopword when
    /// its surface form is in the list.
    pub fn analyze(&self, text: &str) -> Analysis {
        let tokens = normalize(text);
        let mut lemmas = Vec::new();
        let mut positions = Vec::new();
        for (i, token) in tokens.iter().enumerate() {
            let lemma = self.lemmatize(token);
            if !self.is_stopword(token) {
                lemmas.push(lemma);
                positions.push(i);
            }
        }
        Analysis {
            tokens,
            lemmas,
            positions,
        }
    }

    /// Targets the dictionary names that are not nodes of `store`.
    pub fn missing_targets(&self, store: &TripleStore) -> Vec<Term> {
        let mut missing: Vec<Term> = self
            .entries
            .iter()
            .map(|e| &e.target)
            .filter(|t| store.iter().all(|tr| tr.subject() != *t))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }
}

/// Output of [`AliasDictionary::analyze`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    /// Normalized tokens.
    pub tokens: Vec<String>,
    /// Lemmas of the non-stopword tokens.
    pub lemmas: Vec<String>,
    /// `positions[i]` is the index in `tokens` of `lemmas[i]`.
    pub positions: Vec<usize>,
}

/// Lowercase and split on every run of non-alphanumeric characters.
pub fn normalize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mention {
    pub target: Term,
    pub category: Category,
    /// Inclusive token span.
    pub span: (usize, usize),
}

/// Greedy left-to-right longest match. At each position the longest phrase
/// wins and the scan resumes after it; a phrase listed under several
/// categories yields one mention per category.
pub fn match_aliases(tokens: &[String], dict: &AliasDictionary) -> Vec<Mention> {
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let max = dict.longest.min(tokens.len() - i);
        let hit = (1..=max).rev().find_map(|len| {
            dict.by_phrase
                .get(&tokens[i..i + len])
                .map(|ids| (len, ids))
        });
        match hit {
            Some((len, ids)) => {
                for &id in ids {
                    let entry = &dict.entries[id];
                    mentions.push(Mention {
                        target: entry.target.clone(),
                        category: entry.category,
                        span: (i, i + len - 1),
                    });
                }
                i += len;
            }
            None => i += 1,
        }
    }
    mentions
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotFill {
    pub subject: Term,
    pub location: Term,
    pub type311: Option<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NlqError {
    #[error("no subject recognised in the complaint")]
    MissingSubject,
    #[error("no location recognised in the complaint")]
    MissingLocation,
    #[error("complaint mentions several subjects: {}", labels(.0))]
    AmbiguousSubject(Vec<Term>),
    #[error("complaint mentions several locations: {}", labels(.0))]
    AmbiguousLocation(Vec<Term>),
    #[error("no service is registered for {} at {}", .subject.local_name(), .location.local_name())]
    NoMatchingService { subject: Term, location: Term },
    #[error("{count} services match {} at {}; the catalogue is inconsistent", .subject.local_name(), .location.local_name())]
    MultipleMatches {
        subject: Term,
        location: Term,
        count: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn labels(terms: &[Term]) -> String {
    terms
        .iter()
        .map(Term::local_name)
        .collect::<Vec<_>>()
        .join(", ")
}

fn distinct_targets(mentions: &[Mention], category: Category) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for m in mentions.iter().filter(|m| m.category == category) {
        if !out.contains(&m.target) {
            out.push(m.target.clone());
        }
    }
    out
}

/// Exactly one distinct subject and one distinct location are required.
/// The type slot is filled only when exactly one distinct type is mentioned.
pub fn extract_slots(mentions: &[Mention]) -> Result<SlotFill, NlqError> {
    let mut subjects = distinct_targets(mentions, Category::Subject);
    let mut locations = distinct_targets(mentions, Category::Location);
    let mut types = distinct_targets(mentions, Category::Type311);
    let subject = match subjects.len() {
        0 => return Err(NlqError::MissingSubject),
        1 => subjects.remove(0),
        _ => return Err(NlqError::AmbiguousSubject(subjects)),
    };
    let location = match locations.len() {
        0 => return Err(NlqError::MissingLocation),
        1 => locations.remove(0),
        _ => return Err(NlqError::AmbiguousLocation(locations)),
    };
    let type311 = (types.len() == 1).then(|| types.remove(0));
    Ok(SlotFill {
        subject,
        location,
        type311,
    })
}

fn query_term(term: &Term) -> String {
    model::prefixes()
        .compact(term.value())
        .filter(|c| c.starts_with(vocab::PREFIX))
        .unwrap_or_else(|| term.to_string())
}

/// The CQ-1 template with the location and subject filled in.
pub fn build_cq1(slots: &SlotFill) -> String {
    format!(
        "PREFIX {prefix}: <{ns}>\n\
         SELECT * WHERE{{\n    \
         ?subject {prefix}:hasAddress {location}.\n    \
         ?subject {prefix}:has311Subject {subject}.\n    \
         ?subject {prefix}:isHandledBy ?authority.\n    \
         ?subject {prefix}:need311Action ?action\n\
         }}\n",
        prefix = vocab::PREFIX,
        ns = vocab::NS,
        location = query_term(&slots.location),
        subject = query_term(&slots.subject),
    )
}

/// The answer given to a citizen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub slots: SlotFill,
    pub thing: Term,
    pub agency: Term,
    pub action: Term,
    pub type311: Term,
    pub contact: ContactCard,
    /// Set when the reported type differs from the catalogued one.
    pub note: Option<String>,
}

/// Mentions for `text`, with spans mapped back to normalized-token indexes.
pub fn mentions(text: &str, dict: &AliasDictionary) -> Vec<Mention> {
    let analysis = dict.analyze(text);
    let mut found = match_aliases(&analysis.lemmas, dict);
    for m in &mut found {
        m.span = (analysis.positions[m.span.0], analysis.positions[m.span.1]);
    }
    found
}

pub fn slots_for(text: &str, dict: &AliasDictionary) -> Result<SlotFill, NlqError> {
    extract_slots(&mentions(text, dict))
}

/// Full pipeline from complaint text to resolution.
pub fn answer_complaint(
    text: &str,
    store: &TripleStore,
    dict: &AliasDictionary,
) -> Result<Resolution, NlqError> {
    let slots = slots_for(text, dict)?;
    resolve(slots, store)
}

/// Run CQ-1 for already-extracted slots.
pub fn resolve(slots: SlotFill, store: &TripleStore) -> Result<Resolution, NlqError> {
    let query = build_cq1(&slots);
    let table = sparql::run_query(&query, store).expect("CQ-1 template always parses");
    let row = match table.rows() {
        [] => {
            return Err(NlqError::NoMatchingService {
                subject: slots.subject,
                location: slots.location,
            })
        }
        [row] => row,
        rows => {
            return Err(NlqError::MultipleMatches {
                subject: slots.subject,
                location: slots.location,
                count: rows.len(),
            })
        }
    };
    let column = |name: &str| {
        let idx = table
            .columns()
            .iter()
            .position(|c| c == name)
            .expect("template column");
        row[idx].clone()
    };
    let thing = column("subject");
    let agency = column("authority");
    let action = column("action");
    let view = model::thing_view(store, &thing)?;
    let contact = model::agency_contact(store, &agency)?;
    let note = slots
        .type311
        .as_ref()
        .filter(|t| **t != view.type311)
        .map(|t| {
            format!(
                "reported type {} differs from catalogued type {}",
                t.local_name(),
                view.type311.local_name()
            )
        });
    Ok(Resolution {
        slots,
        thing,
        agency,
        action,
        type311: view.type311,
        contact,
        note,
    })
}

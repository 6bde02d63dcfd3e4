mod common;

use civic311::api::ApiError;
use civic311::model::{self, FixtureName};
use civic311::nlq::{self, match_aliases, slots_for, AliasDictionary, Category, Mention};
use civic311::{answer_complaint, Term};
use common::{o, read_tsv, rng};
use rand::seq::SliceRandom;
use rand::Rng;

/// Leftmost-longest reference: at each position try every entry by linear
/// scan and keep the longest phrase that fits.
fn reference_matches(tokens: &[String], dict: &AliasDictionary) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = dict
            .entries()
            .iter()
            .filter(|e| tokens[i..].starts_with(&e.phrase))
            .map(|e| e.phrase.len())
            .max();
        match best {
            Some(len) => {
                let mut hits: Vec<Mention> = dict
                    .entries()
                    .iter()
                    .filter(|e| e.phrase.len() == len && tokens[i..].starts_with(&e.phrase))
                    .map(|e| Mention {
                        target: e.target.clone(),
                        category: e.category,
                        span: (i, i + len - 1),
                    })
                    .collect();
                hits.sort_by(|a, b| {
                    (a.category as u8, &a.target).cmp(&(b.category as u8, &b.target))
                });
                out.extend(hits);
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

fn sorted(mut m: Vec<Mention>) -> Vec<Mention> {
    m.sort_by(|a, b| {
        (a.span, a.category as u8, &a.target).cmp(&(b.span, b.category as u8, &b.target))
    });
    m
}

#[test]
fn greedy_matcher_agrees_with_reference() {
    let dict = AliasDictionary::builtin();
    let mut vocab: Vec<String> = dict
        .entries()
        .iter()
        .flat_map(|e| e.phrase.clone())
        .collect();
    vocab.extend(["quick", "brown", "fox", "iii", "4", "near"].map(String::from));
    vocab.sort();
    vocab.dedup();
    let mut r = rng(31);
    for _ in 0..500 {
        let n = r.gen_range(0..12);
        let tokens: Vec<String> = (0..n)
            .map(|_| vocab.choose(&mut r).unwrap().clone())
            .collect();
        let got = match_aliases(&tokens, &dict);
        assert_eq!(
            sorted(got.clone()),
            sorted(reference_matches(&tokens, &dict)),
            "{tokens:?}"
        );
        for w in got.windows(2) {
            assert!(
                w[0].span.1 < w[1].span.0 || w[0].span == w[1].span,
                "overlap in {tokens:?}"
            );
        }
    }
}

#[test]
fn paraphrase_corpus_fills_the_right_slots() {
    let dict = AliasDictionary::builtin();
    let rows = read_tsv("paraphrases.tsv");
    assert!(rows.len() >= 50);
    let mut per_pair = std::collections::BTreeMap::<(String, String), usize>::new();
    for row in &rows {
        let [subject, location, type311, text] = &row[..] else {
            panic!("bad corpus row {row:?}");
        };
        let slots = slots_for(text, &dict).unwrap_or_else(|e| panic!("{text:?}: {e}"));
        assert_eq!(slots.subject, o(subject), "{text:?}");
        assert_eq!(slots.location, o(location), "{text:?}");
        if !type311.is_empty() {
            assert_eq!(slots.type311, Some(o(type311)), "{text:?}");
        }
        *per_pair
            .entry((subject.clone(), location.clone()))
            .or_default() += 1;
    }
    assert!(per_pair.len() >= 5);
    assert!(per_pair.values().all(|&n| n >= 10), "{per_pair:?}");
}

#[test]
fn probes_fail_with_the_expected_typed_error() {
    let store = model::load_fixture(FixtureName::Replica).unwrap();
    let dict = AliasDictionary::builtin();
    for row in read_tsv("probes.tsv") {
        let [code, text] = &row[..] else {
            panic!("bad probe row {row:?}");
        };
        match answer_complaint(text, &store, &dict) {
            Ok(r) => panic!("{text:?} resolved to {} / {}", r.thing, r.agency),
            Err(e) => assert_eq!(ApiError::from(e).code, code, "{text:?}"),
        }
    }
}

#[test]
fn ambiguity_lists_every_candidate() {
    let dict = AliasDictionary::builtin();
    match slots_for("street light between bh4 and the cafeteria", &dict) {
        Err(nlq::NlqError::AmbiguousLocation(c)) => {
            assert_eq!(c, vec![o("iiitBH4"), o("iiitCafeteria")])
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_alias_target_exists_in_the_full_fixture() {
    let store = model::load_fixture(FixtureName::Full).unwrap();
    assert_eq!(
        AliasDictionary::builtin().missing_targets(&store),
        Vec::<Term>::new()
    );
}

#[test]
fn every_thing_in_the_full_fixture_is_reachable_by_alias() {
    let store = model::load_fixture(FixtureName::Full).unwrap();
    let dict = AliasDictionary::builtin();
    let first_alias = |target: &Term, cat: Category| {
        dict.entries()
            .iter()
            .find(|e| &e.target == target && e.category == cat)
            .map(|e| e.phrase.join(" "))
            .unwrap()
    };
    for thing in model::things(&store) {
        let view = model::thing_view(&store, &thing).unwrap();
        let text = format!(
            "{} problem at {}",
            first_alias(&view.subject, Category::Subject),
            first_alias(&view.address, Category::Location)
        );
        let r = answer_complaint(&text, &store, &dict).unwrap_or_else(|e| panic!("{text:?}: {e}"));
        assert_eq!(r.thing, view.thing);
        assert_eq!(r.agency, view.agency);
        assert_eq!(r.action, view.action);
        assert_eq!(r.type311, view.type311);
    }
}

#[test]
fn dictionary_directory_overrides_builtin() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join(nlq::ALIASES_FILE),
        format!(
            "meadow\tSubject\t{0}Grass\nhq\tLocation\t{0}iiitAdminBlock\n",
            common::O311
        ),
    )
    .unwrap();
    std::fs::write(dir.path().join(nlq::STOPWORDS_FILE), "the\n").unwrap();
    std::fs::write(dir.path().join(nlq::LEMMA_EXCEPTIONS_FILE), "").unwrap();
    let dict = AliasDictionary::load(dir.path()).unwrap();
    let slots = slots_for("the meadow at hq", &dict).unwrap();
    assert_eq!(
        (slots.subject, slots.location),
        (o("Grass"), o("iiitAdminBlock"))
    );
    assert!(slots_for("grass at cc3", &dict).is_err());
}

#[test]
fn conflicting_aliases_are_rejected() {
    let aliases = format!(
        "lawn\tSubject\t{0}Grass\nlawns\tSubject\t{0}Tree\n",
        common::O311
    );
    assert!(matches!(
        AliasDictionary::from_sources(&aliases, "", ""),
        Err(nlq::DictionaryError::Conflict { .. })
    ));
}

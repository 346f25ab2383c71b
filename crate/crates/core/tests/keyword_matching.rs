mod common;

use common::{glob_token, oracle_match_starts, oracle_matches, oracle_tokens};
use delineate_core::keyword::{compile_pattern, match_pattern, KeywordLexicon, TokenMatcher};
use delineate_core::records::{normalize_text, PublicationRecord, Source};
use proptest::prelude::*;

fn token_pattern() -> impl Strategy<Value = String> {
    "[ab*]{1,5}".prop_filter("not only stars", |s| s.chars().any(|c| c != '*'))
}

fn term() -> impl Strategy<Value = String> {
    prop::collection::vec(token_pattern(), 1..4).prop_map(|v| v.join(" "))
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec("[ab]{1,5}", 0..12).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn token_matcher_agrees_with_char_glob(p in token_pattern(), t in "[ab]{0,7}") {
        let m = TokenMatcher::compile(&p);
        prop_assert_eq!(m.matches(&t), glob_token(&p, &t));
    }

    #[test]
    fn pattern_agrees_with_window_oracle(term in term(), text in text()) {
        let pat = compile_pattern(&term).unwrap();
        let norm = normalize_text(&text);
        prop_assert_eq!(match_pattern(&pat, &norm), oracle_matches(&term, &text));
        let starts: Vec<usize> = pat.match_starts(norm.tokens()).collect();
        prop_assert_eq!(starts, oracle_match_starts(&term, &text));
    }

    #[test]
    fn lexicon_index_agrees_with_linear_scan(terms in prop::collection::vec(term(), 1..8), text in text()) {
        let lex = KeywordLexicon::from_terms(&terms).unwrap();
        let mut rec = PublicationRecord::new("r", Source::Arxiv);
        rec.title = Some(text.clone());
        let m = lex.classify(&rec).unwrap();
        let expected: Vec<usize> = (0..lex.len())
            .filter(|&i| oracle_matches(lex.patterns()[i].term(), &text))
            .collect();
        prop_assert_eq!(m.relevant, !expected.is_empty());
        prop_assert_eq!(m.hits, expected);
    }

    #[test]
    fn normalization_matches_oracle(s in "\\PC{0,40}") {
        prop_assert_eq!(normalize_text(&s).tokens().to_vec(), oracle_tokens(&s));
    }
}

#[test]
fn every_shipped_term_matches_itself_with_wildcards_emptied() {
    let lex = KeywordLexicon::shipped();
    for p in lex.patterns() {
        let literal = p.term().replace('*', "");
        assert!(match_pattern(p, &normalize_text(&literal)), "{} vs {literal:?}", p.term());
        assert!(oracle_matches(p.term(), &literal));
    }
}

#[test]
fn title_and_abstract_are_matched_separately() {
    let lex = KeywordLexicon::from_terms(&["machine learning"]).unwrap();
    let mut rec = PublicationRecord::new("r", Source::Arxiv);
    rec.title = Some("A study of machine".into());
    rec.abstract_text = Some("learning curves".into());
    assert!(!lex.is_relevant(&rec).unwrap());
    rec.abstract_text = Some("Machine-Learning curves".into());
    assert!(lex.is_relevant(&rec).unwrap());
}

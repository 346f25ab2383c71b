//! Wildcard term patterns matched against normalized token windows.
//!
//! A term is normalized with [`normalize_text`] and each token becomes one
//! matcher. `*` stands for zero or more non-whitespace characters inside a
//! single token, so `fac*` matches `face`, `facial` and `fac` but a pattern
//! never spans more tokens than it has.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{normalize_text, NormalizedText, PublicationRecord};

/// Baseline AI lexicon shipped with the repository (100 terms).
pub const SHIPPED_LEXICON: &str = include_str!("../../../lexicons/cset_keywords_2019.txt");

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("term {0:?} has no tokens after normalization")]
    EmptyTerm(String),
    #[error("record {id} has neither title nor abstract")]
    NoText { id: String },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Matcher for one token position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum TokenMatcher {
    Literal(String),
    /// Token with a single trailing `*`.
    Prefix(String),
    /// Literal segments between `*`s; first is a prefix, last a suffix.
    Glob(Vec<String>),
}

impl TokenMatcher {
    pub fn compile(token: &str) -> Self {
        if !token.contains('*') {
            return TokenMatcher::Literal(token.to_string());
        }
        let mut segments: Vec<String> = Vec::new();
        let mut prev_star = false;
        let mut cur = String::new();
        for c in token.chars() {
            if c == '*' {
                if !prev_star {
                    segments.push(std::mem::take(&mut cur));
                }
                prev_star = true;
            } else {
                cur.push(c);
                prev_star = false;
            }
        }
        segments.push(cur);
        if segments.len() == 2 && segments[1].is_empty() {
            TokenMatcher::Prefix(segments.swap_remove(0))
        } else {
            TokenMatcher::Glob(segments)
        }
    }

    #[inline]
    pub fn matches(&self, token: &str) -> bool {
        match self {
            TokenMatcher::Literal(lit) => lit == token,
            TokenMatcher::Prefix(p) => token.starts_with(p.as_str()),
            TokenMatcher::Glob(segments) => glob_segments_match(segments, token),
        }
    }

    fn literal(&self) -> Option<&str> {
        match self {
            TokenMatcher::Literal(s) => Some(s),
            _ => None,
        }
    }
}

fn glob_segments_match(segments: &[String], token: &str) -> bool {
    let (first, rest) = match segments.split_first() {
        Some(x) => x,
        None => return token.is_empty(),
    };
    let Some(mut remaining) = token.strip_prefix(first.as_str()) else {
        return false;
    };
    let Some((last, middle)) = rest.split_last() else {
        return remaining.is_empty();
    };
    for seg in middle {
        match remaining.find(seg.as_str()) {
            Some(pos) => remaining = &remaining[pos + seg.len()..],
            None => return false,
        }
    }
    remaining.ends_with(last.as_str())
}

/// Compiled term: one matcher per normalized token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermPattern {
    term: String,
    matchers: Vec<TokenMatcher>,
}

impl TermPattern {
    /// Term as written in the lexicon.
    pub fn term(&self) -> &str {
        &self.term
    }

    pub fn matchers(&self) -> &[TokenMatcher] {
        &self.matchers
    }

    pub fn len(&self) -> usize {
        self.matchers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchers.is_empty()
    }

    pub fn has_wildcard(&self) -> bool {
        self.matchers
            .iter()
            .any(|m| !matches!(m, TokenMatcher::Literal(_)))
    }

    /// Normalized form used to decide whether two terms are the same.
    pub fn normalized_key(&self) -> String {
        normalize_text(&self.term).joined()
    }

    #[inline]
    pub fn matches_at(&self, tokens: &[String], start: usize) -> bool {
        let end = start + self.matchers.len();
        end <= tokens.len()
            && self
                .matchers
                .iter()
                .zip(&tokens[start..end])
                .all(|(m, t)| m.matches(t))
    }

    /// Start positions of every matching window, overlaps included.
    pub fn match_starts<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = usize> + 'a {
        let windows = (tokens.len() + 1).saturating_sub(self.matchers.len());
        (0..windows).filter(move |&i| self.matches_at(tokens, i))
    }
}

pub fn compile_pattern(term: &str) -> Result<TermPattern, KeywordError> {
    let norm = normalize_text(term);
    if norm.is_empty() {
        return Err(KeywordError::EmptyTerm(term.to_string()));
    }
    Ok(TermPattern {
        term: term.trim().to_string(),
        matchers: norm.tokens().iter().map(|t| TokenMatcher::compile(t)).collect(),
    })
}

/// True iff some contiguous window of `text` matches the pattern.
pub fn match_pattern(pattern: &TermPattern, text: &NormalizedText) -> bool {
    pattern.match_starts(text.tokens()).next().is_some()
}

/// Terms from a lexicon file: one per line, `#` starts a comment.
pub fn parse_lexicon(text: &str) -> Result<Vec<String>, KeywordError> {
    let mut terms = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if normalize_text(content).is_empty() {
            return Err(KeywordError::Lexicon {
                line: i + 1,
                message: format!("term {content:?} has no tokens"),
            });
        }
        terms.push(content.to_string());
    }
    Ok(terms)
}

/// Outcome of keyword classification for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordMatch {
    pub relevant: bool,
    /// Indices into the lexicon of every pattern that matched, ascending.
    pub hits: Vec<usize>,
}

/// Precompiled pattern set with a first-token index.
///
/// Patterns whose first matcher is a literal are bucketed by that token;
/// the rest are tried at every position.
#[derive(Debug, Clone)]
pub struct KeywordLexicon {
    patterns: Vec<TermPattern>,
    by_first_literal: HashMap<String, Vec<usize>>,
    wildcard_first: Vec<usize>,
}

impl KeywordLexicon {
    pub fn new(patterns: Vec<TermPattern>) -> Self {
        let mut by_first_literal: HashMap<String, Vec<usize>> = HashMap::new();
        let mut wildcard_first = Vec::new();
        for (i, p) in patterns.iter().enumerate() {
            match p.matchers.first().and_then(TokenMatcher::literal) {
                Some(lit) => by_first_literal.entry(lit.to_string()).or_default().push(i),
                None => wildcard_first.push(i),
            }
        }
        Self {
            patterns,
            by_first_literal,
            wildcard_first,
        }
    }

    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Result<Self, KeywordError> {
        let patterns = terms
            .iter()
            .map(|t| compile_pattern(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(patterns))
    }

    pub fn parse(text: &str) -> Result<Self, KeywordError> {
        Self::from_terms(&parse_lexicon(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, KeywordError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The shipped 2019 baseline lexicon.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_LEXICON).expect("shipped lexicon is well formed")
    }

    pub fn patterns(&self) -> &[TermPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Calls `f(pattern_index, start)` for every match in `tokens`.
    pub fn for_each_match(&self, tokens: &[String], mut f: impl FnMut(usize, usize)) {
        for (start, tok) in tokens.iter().enumerate() {
            if let Some(bucket) = self.by_first_literal.get(tok.as_str()) {
                for &pi in bucket {
                    if self.patterns[pi].matches_at(tokens, start) {
                        f(pi, start);
                    }
                }
            }
            for &pi in &self.wildcard_first {
                if self.patterns[pi].matches_at(tokens, start) {
                    f(pi, start);
                }
            }
        }
    }

    fn any_match(&self, tokens: &[String]) -> bool {
        tokens.iter().enumerate().any(|(start, tok)| {
            self.by_first_literal
                .get(tok.as_str())
                .is_some_and(|b| b.iter().any(|&pi| self.patterns[pi].matches_at(tokens, start)))
                || self
                    .wildcard_first
                    .iter()
                    .any(|&pi| self.patterns[pi].matches_at(tokens, start))
        })
    }

    /// Relevance only, stopping at the first match.
    pub fn is_relevant(&self, record: &PublicationRecord) -> Result<bool, KeywordError> {
        let (title, abs) = record_texts(record)?;
        Ok(self.any_match(title.tokens()) || self.any_match(abs.tokens()))
    }

    /// Relevant iff any pattern matches the normalized title or abstract.
    pub fn classify(&self, record: &PublicationRecord) -> Result<KeywordMatch, KeywordError> {
        let (title, abs) = record_texts(record)?;
        let mut hits = Vec::new();
        for text in [&title, &abs] {
            self.for_each_match(text.tokens(), |pi, _| hits.push(pi));
        }
        hits.sort_unstable();
        hits.dedup();
        Ok(KeywordMatch {
            relevant: !hits.is_empty(),
            hits,
        })
    }
}

fn record_texts(
    record: &PublicationRecord,
) -> Result<(NormalizedText, NormalizedText), KeywordError> {
    if record.title.is_none() && record.abstract_text.is_none() {
        return Err(KeywordError::NoText {
            id: record.id.clone(),
        });
    }
    let norm = |s: &Option<String>| s.as_deref().map(normalize_text).unwrap_or_default();
    Ok((norm(&record.title), norm(&record.abstract_text)))
}

/// Classify one record against an explicit pattern list.
pub fn classify_by_keywords(
    record: &PublicationRecord,
    patterns: &KeywordLexicon,
) -> Result<KeywordMatch, KeywordError> {
    patterns.classify(record)
}

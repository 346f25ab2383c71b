//! Scored-lexicon features: weighted counts and token proportions of low-
//! and high-scoring term matches in title and abstract.
//!
//! Layout (20 values), first for the title and then for the abstract:
//!
//! ```text
//! c1 c2 c3   occurrences of score-s pattern matches (overlapping windows count)
//! d1 d2 d3   distinct score-s patterns that matched
//! p1 p2 p3   tokens covered by score-s matches / tokens in the field
//! w          1*c1 + 2*c2 + 3*c3
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyword::{compile_pattern, KeywordError, KeywordLexicon, TermPattern};
use crate::records::{normalize_text, PublicationRecord};
use crate::scalar::Scalar;

pub const FEATURES_PER_FIELD: usize = 10;
pub const FEATURE_COUNT: usize = 2 * FEATURES_PER_FIELD;
pub const SCORE_LEVELS: usize = 3;

/// Placeholder scored lexicon: the baseline keyword terms, each scored 3.
pub const PLACEHOLDER_SCORED_LEXICON: &str =
    include_str!("../../../lexicons/placeholder_scored.tsv");

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("lexicon line {line}: score {score:?} not in 1..=3")]
    InvalidScore { line: usize, score: String },
    #[error("lexicon line {line}: expected `term<TAB>score`")]
    MalformedLine { line: usize },
    #[error("lexicon line {line}: term {term:?} duplicates an earlier term")]
    DuplicateTerm { line: usize, term: String },
    #[error(transparent)]
    Keyword(#[from] KeywordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Column names in layout order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for field in ["title", "abstract"] {
        for kind in ["count", "distinct", "proportion"] {
            for s in 1..=SCORE_LEVELS {
                names.push(format!("{field}_{kind}_{s}"));
            }
        }
        names.push(format!("{field}_weighted"));
    }
    names
}

/// Patterns with a relevance score on a 1..=3 scale.
#[derive(Debug, Clone)]
pub struct ScoredLexicon {
    matcher: KeywordLexicon,
    scores: Vec<u8>,
}

impl ScoredLexicon {
    pub fn new(entries: Vec<(TermPattern, u8)>) -> Result<Self, FeatureError> {
        let mut seen = HashSet::new();
        for (i, (p, s)) in entries.iter().enumerate() {
            if !(1..=3).contains(s) {
                return Err(FeatureError::InvalidScore {
                    line: i + 1,
                    score: s.to_string(),
                });
            }
            if !seen.insert(p.normalized_key()) {
                return Err(FeatureError::DuplicateTerm {
                    line: i + 1,
                    term: p.term().to_string(),
                });
            }
        }
        let (patterns, scores) = entries.into_iter().unzip();
        Ok(Self {
            matcher: KeywordLexicon::new(patterns),
            scores,
        })
    }

    /// Parse `term<TAB>score` lines; `#` lines and blanks are ignored.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (term, score) = trimmed
                .rsplit_once('\t')
                .ok_or(FeatureError::MalformedLine { line: line_no })?;
            let score: u8 = match score.trim().parse() {
                Ok(s @ 1..=3) => s,
                _ => {
                    return Err(FeatureError::InvalidScore {
                        line: line_no,
                        score: score.trim().to_string(),
                    })
                }
            };
            let pattern = compile_pattern(term)?;
            if !seen.insert(pattern.normalized_key()) {
                return Err(FeatureError::DuplicateTerm {
                    line: line_no,
                    term: term.trim().to_string(),
                });
            }
            entries.push((pattern, score));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn placeholder() -> Self {
        Self::parse(PLACEHOLDER_SCORED_LEXICON).expect("placeholder lexicon is well formed")
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&TermPattern, u8)> {
        self.matcher.patterns().iter().zip(self.scores.iter().copied())
    }

    /// Serialize back to the `term<TAB>score` format.
    pub fn to_tsv(&self) -> String {
        self.entries()
            .map(|(p, s)| format!("{}\t{s}\n", p.term()))
            .collect()
    }
}

/// Fixed-layout feature row for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<F> {
    pub record_id: String,
    pub values: Vec<F>,
}

impl<F: Scalar> FeatureVector<F> {
    pub fn new(record_id: impl Into<String>, values: Vec<F>) -> Self {
        Self {
            record_id: record_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn field_features<F: Scalar>(lexicon: &ScoredLexicon, tokens: &[String], out: &mut [F]) {
    let mut counts = [0usize; SCORE_LEVELS];
    let mut matched: Vec<usize> = Vec::new();
    let mut covered = vec![[false; SCORE_LEVELS]; tokens.len()];
    lexicon.matcher.for_each_match(tokens, |pi, start| {
        let level = usize::from(lexicon.scores[pi]) - 1;
        counts[level] += 1;
        matched.push(pi);
        let len = lexicon.matcher.patterns()[pi].len();
        for cell in &mut covered[start..start + len] {
            cell[level] = true;
        }
    });
    matched.sort_unstable();
    matched.dedup();
    let mut distinct = [0usize; SCORE_LEVELS];
    for pi in matched {
        distinct[usize::from(lexicon.scores[pi]) - 1] += 1;
    }
    let total = tokens.len();
    for level in 0..SCORE_LEVELS {
        out[level] = F::of_usize(counts[level]);
        out[SCORE_LEVELS + level] = F::of_usize(distinct[level]);
        out[2 * SCORE_LEVELS + level] = if total == 0 {
            F::zero()
        } else {
            let hit = covered.iter().filter(|c| c[level]).count();
            F::of_usize(hit) / F::of_usize(total)
        };
    }
    out[FEATURES_PER_FIELD - 1] = F::of_usize(counts[0] + 2 * counts[1] + 3 * counts[2]);
}

/// Build the 20-value feature row for a record. A missing field counts as
/// empty text; both missing is an error.
pub fn extract_features<F: Scalar>(
    record: &PublicationRecord,
    lexicon: &ScoredLexicon,
) -> Result<FeatureVector<F>, FeatureError> {
    if record.title.is_none() && record.abstract_text.is_none() {
        return Err(KeywordError::NoText {
            id: record.id.clone(),
        }
        .into());
    }
    let mut values = vec![F::zero(); FEATURE_COUNT];
    for (field, slot) in [&record.title, &record.abstract_text]
        .into_iter()
        .zip(values.chunks_mut(FEATURES_PER_FIELD))
    {
        let norm = field.as_deref().map(normalize_text).unwrap_or_default();
        field_features(lexicon, norm.tokens(), slot);
    }
    Ok(FeatureVector::new(record.id.clone(), values))
}

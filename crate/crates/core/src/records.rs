//! Publication data model, text normalization and relevance labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record {id} has no subject labels")]
    MissingSubjects { id: String },
    #[error("subject config: {0}")]
    Config(String),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Corpus a record was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Arxiv,
    Wos,
    Dimensions,
    Mag,
    Other,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Arxiv,
        Source::Wos,
        Source::Dimensions,
        Source::Mag,
        Source::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Arxiv => "arxiv",
            Source::Wos => "wos",
            Source::Dimensions => "dimensions",
            Source::Mag => "mag",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RecordError::UnknownSource(s.to_string()))
    }
}

/// One publication's metadata.
///
/// `subjects` keeps the listing order of the source metadata with duplicates
/// removed; the first entry is the primary subject. It is empty for records
/// from unlabeled corpora. `authors` holds author names as supplied; surname
/// extraction happens at linkage time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub source: Source,
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub year: Option<i32>,
    pub authors: Vec<String>,
    pub doi: Option<String>,
    pub citation_ids: Option<BTreeSet<String>>,
    pub language: Option<String>,
    pub subjects: Vec<String>,
    pub field_scores: BTreeMap<String, f64>,
}

impl PublicationRecord {
    pub fn new(id: impl Into<String>, source: Source) -> Self {
        Self {
            id: id.into(),
            source,
            title: None,
            abstract_text: None,
            year: None,
            authors: Vec::new(),
            doi: None,
            citation_ids: None,
            language: None,
            subjects: Vec::new(),
            field_scores: BTreeMap::new(),
        }
    }

    pub fn primary_subject(&self) -> Option<&str> {
        self.subjects.first().map(String::as_str)
    }

    pub fn is_labeled(&self) -> bool {
        !self.subjects.is_empty()
    }

    /// Title, or `None` when absent or blank.
    pub fn title_text(&self) -> Option<&str> {
        non_blank(self.title.as_deref())
    }

    /// Abstract, or `None` when absent or blank.
    pub fn abstract_body(&self) -> Option<&str> {
        non_blank(self.abstract_text.as_deref())
    }
}

fn non_blank(s: Option<&str>) -> Option<&str> {
    s.filter(|s| !s.trim().is_empty())
}

/// Lowercased token sequence produced by [`normalize_text`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NormalizedText {
    tokens: Vec<String>,
}

impl NormalizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn raw_length(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

/// Lowercase, map every character that is not a letter, digit or `*` to a
/// space, and split on whitespace.
///
/// Lowercasing uses the simple (one-to-one) Unicode mapping.
pub fn normalize_text(raw: &str) -> NormalizedText {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in raw.chars() {
        let lower = c.to_lowercase().next().unwrap_or(c);
        if lower.is_alphanumeric() || lower == '*' {
            current.push(lower);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    NormalizedText { tokens }
}

/// Relevant subject set plus alias pairs that collapse into one subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectConfig {
    pub relevant_subjects: BTreeSet<String>,
    #[serde(default)]
    pub alias_pairs: Vec<(String, String)>,
}

impl Default for SubjectConfig {
    fn default() -> Self {
        Self::six_subject()
    }
}

impl SubjectConfig {
    pub fn new(
        relevant: impl IntoIterator<Item = impl Into<String>>,
        alias_pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, RecordError> {
        let cfg = Self {
            relevant_subjects: relevant.into_iter().map(Into::into).collect(),
            alias_pairs: alias_pairs.into_iter().collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// cs.AI, cs.CL, cs.CV, cs.LG (merged with stat.ML), cs.MA, cs.RO.
    pub fn six_subject() -> Self {
        Self {
            relevant_subjects: ["cs.AI", "cs.CL", "cs.CV", "cs.LG", "cs.MA", "cs.RO"]
                .into_iter()
                .map(String::from)
                .collect(),
            alias_pairs: vec![("cs.LG".to_string(), "stat.ML".to_string())],
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.relevant_subjects.is_empty() {
            return Err(RecordError::Config("relevant_subjects is empty".into()));
        }
        if let Some(s) = self.relevant_subjects.iter().find(|s| s.trim().is_empty()) {
            return Err(RecordError::Config(format!("blank subject code {s:?}")));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RecordError> {
        let cfg: SubjectConfig =
            toml::from_str(text).map_err(|e| RecordError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Representative code of the alias class containing `code`: the
    /// lexicographically smallest member of the transitive closure of the
    /// alias pairs.
    pub fn canonical<'a>(&'a self, code: &'a str) -> &'a str {
        let mut best = code;
        let mut seen: Vec<&str> = vec![code];
        let mut frontier = 0;
        while frontier < seen.len() {
            let cur = seen[frontier];
            frontier += 1;
            for (a, b) in &self.alias_pairs {
                let other = if a == cur {
                    b.as_str()
                } else if b == cur {
                    a.as_str()
                } else {
                    continue;
                };
                if !seen.contains(&other) {
                    seen.push(other);
                    if other < best {
                        best = other;
                    }
                }
            }
        }
        best
    }

    fn relevant_canonical(&self) -> BTreeSet<&str> {
        self.relevant_subjects
            .iter()
            .map(|s| self.canonical(s))
            .collect()
    }

    /// Canonical relevant subjects present on the record.
    pub fn relevant_flags(&self, record: &PublicationRecord) -> BTreeSet<String> {
        let relevant = self.relevant_canonical();
        record
            .subjects
            .iter()
            .map(|s| self.canonical(s))
            .filter(|s| relevant.contains(s))
            .map(str::to_string)
            .collect()
    }

    /// Relevant subject groups: canonical code and every alias code that
    /// folds into it, in canonical order.
    pub fn groups(&self) -> Vec<(String, BTreeSet<String>)> {
        let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for code in &self.relevant_subjects {
            let canon = self.canonical(code).to_string();
            let entry = groups.entry(canon.clone()).or_default();
            entry.insert(code.clone());
            for (a, b) in &self.alias_pairs {
                for c in [a, b] {
                    if self.canonical(c) == canon {
                        entry.insert(c.clone());
                    }
                }
            }
        }
        groups.into_iter().collect()
    }

    /// Whether the record carries `subject`, modulo aliasing.
    pub fn has_subject(&self, record: &PublicationRecord, subject: &str) -> bool {
        let target = self.canonical(subject);
        record.subjects.iter().any(|s| self.canonical(s) == target)
    }
}

/// True iff the record's subjects (primary or cross-listed, after alias
/// merging) intersect the configured relevant subjects.
pub fn derive_relevance_label(
    record: &PublicationRecord,
    config: &SubjectConfig,
) -> Result<bool, RecordError> {
    if record.subjects.is_empty() {
        return Err(RecordError::MissingSubjects {
            id: record.id.clone(),
        });
    }
    let relevant = config.relevant_canonical();
    Ok(record
        .subjects
        .iter()
        .any(|s| relevant.contains(config.canonical(s))))
}

/// One-vs-all label for a single subject.
pub fn derive_subject_label(
    record: &PublicationRecord,
    subject: &str,
    config: &SubjectConfig,
) -> Result<bool, RecordError> {
    if record.subjects.is_empty() {
        return Err(RecordError::MissingSubjects {
            id: record.id.clone(),
        });
    }
    Ok(config.has_subject(record, subject))
}

/// Why [`admit_record`] turned a record away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoTitle,
    NoAbstract,
    TooOld,
    Language,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NoTitle => "no_title",
            RejectReason::NoAbstract => "no_abstract",
            RejectReason::TooOld => "too_old",
            RejectReason::Language => "language",
        }
    }
}

/// Pluggable language detector. Implementations decide from whatever the
/// record carries (declared code, text, ...).
pub trait LanguageGate: Send + Sync {
    fn accepts(&self, record: &PublicationRecord) -> bool;
}

/// Accepts every record.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughGate;

impl LanguageGate for PassThroughGate {
    fn accepts(&self, _record: &PublicationRecord) -> bool {
        true
    }
}

/// Accepts records whose declared ISO-639-1 code is in the allowlist.
#[derive(Debug, Clone)]
pub struct DeclaredLanguageGate {
    allowed: BTreeSet<String>,
    accept_undeclared: bool,
}

impl DeclaredLanguageGate {
    pub fn new(allowed: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        Self {
            allowed: allowed
                .into_iter()
                .map(|s| s.as_ref().trim().to_ascii_lowercase())
                .collect(),
            accept_undeclared: false,
        }
    }

    pub fn accept_undeclared(mut self, yes: bool) -> Self {
        self.accept_undeclared = yes;
        self
    }
}

impl LanguageGate for DeclaredLanguageGate {
    fn accepts(&self, record: &PublicationRecord) -> bool {
        match record.language.as_deref() {
            Some(code) => self.allowed.contains(&code.trim().to_ascii_lowercase()),
            None => self.accept_undeclared,
        }
    }
}

/// Corpus admission filter: non-null title and abstract, `year >= min_year`,
/// and a language gate. A missing year counts as too old.
///
/// Checks run in the order title, abstract, year, language; the first
/// failure is reported.
pub fn admit_record(
    record: &PublicationRecord,
    min_year: i32,
    gate: &dyn LanguageGate,
) -> Result<(), RejectReason> {
    if record.title_text().is_none() {
        return Err(RejectReason::NoTitle);
    }
    if record.abstract_body().is_none() {
        return Err(RejectReason::NoAbstract);
    }
    match record.year {
        Some(y) if y >= min_year => {}
        _ => return Err(RejectReason::TooOld),
    }
    if !gate.accepts(record) {
        return Err(RejectReason::Language);
    }
    Ok(())
}

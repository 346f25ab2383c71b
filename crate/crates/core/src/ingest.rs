//! JSONL readers and writers for labeled/unlabeled corpora and embedding
//! tables.
//!
//! Corpus lines are JSON objects. Recognised keys:
//!
//! | key | type | notes |
//! |-----|------|-------|
//! | `id` | string (or number) | required, unique per file |
//! | `title`, `abstract` | string | nullable |
//! | `year` | integer | wins over every date source |
//! | `date` | string | first 4-digit year in the string |
//! | `versions` | `[{"created": ...}]` | arXiv snapshot submission dates |
//! | `categories` | `"cs.CV cs.LG"` or list | labeled corpora; alias `subjects` |
//! | `authors` | list of names, or one `,`/`and`-separated string | |
//! | `authors_parsed` | `[[last, first, suffix], ...]` | preferred over `authors` |
//! | `doi` | string | |
//! | `citations` | list of ids | alias `citation_ids` |
//! | `field_scores` | object field → number | |
//! | `language` | ISO-639-1 code | |
//!
//! Without any date key, labeled records take the year from the arXiv
//! identifier (`1501.00001` → 2015, `math/0406123` → 2004).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::records::{PublicationRecord, Source};
use crate::scalar::Scalar;

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("embedding `{id}` has {found} values, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding `{id}` has a non-finite value at position {index}")]
    NonFiniteValue { id: String, index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to do with a malformed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    #[default]
    Abort,
    Skip,
}

/// Records read from one file plus the lines that were skipped.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<PublicationRecord>,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

impl Corpus {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TextOrList {
    Text(String),
    List(Vec<String>),
}

#[derive(Deserialize)]
struct RawVersion {
    created: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<IdValue>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    year: Option<i64>,
    date: Option<String>,
    versions: Option<Vec<RawVersion>>,
    #[serde(alias = "subjects")]
    categories: Option<TextOrList>,
    authors: Option<TextOrList>,
    authors_parsed: Option<Vec<Vec<String>>>,
    doi: Option<String>,
    #[serde(alias = "citation_ids")]
    citations: Option<Vec<String>>,
    field_scores: Option<BTreeMap<String, f64>>,
    language: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CorpusKind {
    Labeled,
    Unlabeled(Source),
}

/// Streaming line reader yielding one record per non-blank line.
pub struct RecordLines<R> {
    reader: R,
    kind: CorpusKind,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> RecordLines<R> {
    pub fn labeled(reader: R) -> Self {
        Self::new(reader, CorpusKind::Labeled)
    }

    pub fn unlabeled(reader: R, source: Source) -> Self {
        Self::new(reader, CorpusKind::Unlabeled(source))
    }

    fn new(reader: R, kind: CorpusKind) -> Self {
        Self {
            reader,
            kind,
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for RecordLines<R> {
    /// `(line number, parsed record)`.
    type Item = (usize, Result<PublicationRecord, IngestError>);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.line_no += 1;
                    return Some((self.line_no, Err(e.into())));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let parsed = parse_record_line(line, self.kind).map_err(|message| {
                IngestError::Parse {
                    line: self.line_no,
                    message,
                }
            });
            return Some((self.line_no, parsed));
        }
    }
}

fn parse_record_line(line: &str, kind: CorpusKind) -> Result<PublicationRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let id = match raw.id {
        Some(IdValue::Text(s)) => s.trim().to_string(),
        Some(IdValue::Number(n)) => n.to_string(),
        None => return Err("missing `id`".into()),
    };
    if id.is_empty() {
        return Err("empty `id`".into());
    }

    let source = match kind {
        CorpusKind::Labeled => Source::Arxiv,
        CorpusKind::Unlabeled(s) => s,
    };
    let mut rec = PublicationRecord::new(id, source);
    rec.title = raw.title;
    rec.abstract_text = raw.abstract_text;
    rec.doi = raw.doi.filter(|d| !d.trim().is_empty());
    rec.citation_ids = raw.citations.map(|c| c.into_iter().collect::<BTreeSet<_>>());
    rec.field_scores = raw.field_scores.unwrap_or_default();
    rec.language = raw.language.filter(|l| !l.trim().is_empty());
    rec.authors = match (raw.authors_parsed, raw.authors) {
        (Some(parsed), _) if !parsed.is_empty() => parsed
            .into_iter()
            .filter_map(|parts| join_parsed_author(&parts))
            .collect(),
        (_, Some(TextOrList::List(list))) => list,
        (_, Some(TextOrList::Text(text))) => split_author_string(&text),
        _ => Vec::new(),
    };

    let date_year = raw
        .date
        .as_deref()
        .and_then(first_year)
        .or_else(|| {
            raw.versions
                .as_ref()
                .and_then(|v| v.first())
                .and_then(|v| v.created.as_deref())
                .and_then(first_year)
        });
    let year = match raw.year {
        Some(y) => Some(i32::try_from(y).map_err(|_| format!("year {y} out of range"))?),
        None => date_year.or_else(|| match kind {
            CorpusKind::Labeled => year_from_arxiv_id(&rec.id),
            CorpusKind::Unlabeled(_) => None,
        }),
    };
    if let Some(y) = year {
        if !(MIN_YEAR..=MAX_YEAR).contains(&y) {
            return Err(format!("year {y} outside {MIN_YEAR}..={MAX_YEAR}"));
        }
    }
    rec.year = year;

    if kind == CorpusKind::Labeled {
        let subjects: Vec<String> = match raw.categories {
            Some(TextOrList::Text(s)) => s.split_whitespace().map(str::to_string).collect(),
            Some(TextOrList::List(l)) => l
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            None => Vec::new(),
        };
        if subjects.is_empty() {
            return Err("missing `categories`".into());
        }
        let mut seen = HashSet::new();
        rec.subjects = subjects
            .into_iter()
            .filter(|s| seen.insert(s.clone()))
            .collect();
    }
    Ok(rec)
}

fn join_parsed_author(parts: &[String]) -> Option<String> {
    let last = parts.first()?.trim();
    if last.is_empty() {
        return None;
    }
    let rest: Vec<&str> = parts[1..]
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    Some(if rest.is_empty() {
        last.to_string()
    } else {
        format!("{last}, {}", rest.join(" "))
    })
}

fn split_author_string(text: &str) -> Vec<String> {
    text.split(',')
        .flat_map(|chunk| chunk.split(" and "))
        .map(|s| s.trim().trim_start_matches("and ").trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// First run of exactly four ASCII digits that is a plausible year.
fn first_year(text: &str) -> Option<i32> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i - start == 4 {
                let y: i32 = text[start..i].parse().ok()?;
                if (MIN_YEAR..=MAX_YEAR).contains(&y) {
                    return Some(y);
                }
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Submission year encoded in an arXiv identifier.
pub fn year_from_arxiv_id(id: &str) -> Option<i32> {
    let id = id.trim();
    let id = id.strip_prefix("arXiv:").unwrap_or(id);
    let digits = match id.rsplit_once('/') {
        Some((_, tail)) => tail,
        None => id,
    };
    let yy: i32 = digits.get(..2)?.parse().ok()?;
    if !digits.as_bytes().get(2..4)?.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let old_style = id.contains('/');
    if !old_style && digits.as_bytes().get(4) != Some(&b'.') {
        return None;
    }
    Some(if old_style && yy >= 91 { 1900 + yy } else { 2000 + yy })
}

fn collect_records<R: BufRead>(
    lines: RecordLines<R>,
    mode: ErrorMode,
) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus::default();
    let mut ids = HashSet::new();
    for (line, parsed) in lines {
        let result = parsed.and_then(|rec| {
            if ids.insert(rec.id.clone()) {
                Ok(rec)
            } else {
                Err(IngestError::DuplicateId { line, id: rec.id })
            }
        });
        match (result, mode) {
            (Ok(rec), _) => corpus.records.push(rec),
            (Err(IngestError::Io(e)), _) => return Err(IngestError::Io(e)),
            (Err(e), ErrorMode::Abort) => return Err(e),
            (Err(e), ErrorMode::Skip) => corpus.skipped.push(SkippedLine {
                line,
                message: e.to_string(),
            }),
        }
    }
    Ok(corpus)
}

/// Read an arXiv-style labeled corpus. Every record gets source `arxiv`.
pub fn read_labeled_corpus<R: BufRead>(reader: R, mode: ErrorMode) -> Result<Corpus, IngestError> {
    collect_records(RecordLines::labeled(reader), mode)
}

/// Read an unlabeled export; records carry `source` and no subjects.
pub fn read_unlabeled_corpus<R: BufRead>(
    reader: R,
    source: Source,
    mode: ErrorMode,
) -> Result<Corpus, IngestError> {
    collect_records(RecordLines::unlabeled(reader, source), mode)
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    title: Option<&'a str>,
    #[serde(rename = "abstract", skip_serializing_if = "Option::is_none")]
    abstract_text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    year: Option<i32>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    categories: &'a [String],
    authors: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    doi: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    citations: Option<&'a BTreeSet<String>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    field_scores: &'a BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    language: Option<&'a str>,
}

/// Write records in the canonical JSONL schema read back by this module.
pub fn write_records<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a PublicationRecord>,
) -> Result<(), IngestError> {
    for r in records {
        let row = RecordOut {
            id: &r.id,
            title: r.title.as_deref(),
            abstract_text: r.abstract_text.as_deref(),
            year: r.year,
            categories: &r.subjects,
            authors: &r.authors,
            doi: r.doi.as_deref(),
            citations: r.citation_ids.as_ref(),
            field_scores: &r.field_scores,
            language: r.language.as_deref(),
        };
        serde_json::to_writer(&mut out, &row).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Supplier-declared convention for an embedding file: which record text
/// was embedded and by what encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    /// e.g. `"title+abstract"`.
    pub text_fields: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
}

/// Dense vectors keyed by record id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<F>,
    pub manifest: Option<EmbeddingManifest>,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            manifest: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[F]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[F])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Append a row, enforcing the table invariants.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[F]) -> Result<(), IngestError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(IngestError::DimensionMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue { id, index });
        }
        if self.index.contains_key(&id) {
            return Err(IngestError::DuplicateId {
                line: self.ids.len() + 1,
                id,
            });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }
}

fn json_number<F: Scalar>(v: &Value) -> Option<F> {
    match v {
        Value::Number(n) => n.as_f64().map(F::of),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "nan" => Some(F::nan()),
            "inf" | "infinity" | "+inf" | "+infinity" => Some(F::infinity()),
            "-inf" | "-infinity" => Some(F::neg_infinity()),
            other => other.parse::<f64>().ok().map(F::of),
        },
        Value::Null => Some(F::nan()),
        _ => None,
    }
}

/// Read `{"id": ..., "vector": [...]}` lines. An optional first line
/// `{"manifest": {"text_fields": ..., "encoder": ...}}` declares the
/// embedding convention. The dimension comes from the first row.
pub fn read_embeddings<F: Scalar, R: BufRead>(reader: R) -> Result<EmbeddingTable<F>, IngestError> {
    let mut table: Option<EmbeddingTable<F>> = None;
    let mut manifest = None;
    let mut row: Vec<F> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| IngestError::Parse {
            line: line_no,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(m) = value.get("manifest") {
            if table.is_some() || manifest.is_some() {
                return Err(parse_err("manifest must be the first line".into()));
            }
            manifest = Some(
                serde_json::from_value::<EmbeddingManifest>(m.clone())
                    .map_err(|e| parse_err(e.to_string()))?,
            );
            continue;
        }
        let id = match value.get("id") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(parse_err("missing `id`".into())),
        };
        let Some(Value::Array(items)) = value.get("vector") else {
            return Err(parse_err(format!("`{id}`: missing `vector` array")));
        };
        row.clear();
        for item in items {
            row.push(
                json_number(item)
                    .ok_or_else(|| parse_err(format!("`{id}`: non-numeric vector entry")))?,
            );
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(row.len()));
        if t.dim == 0 {
            return Err(parse_err(format!("`{id}`: empty vector")));
        }
        t.insert(id, &row).map_err(|e| match e {
            IngestError::DuplicateId { id, .. } => IngestError::DuplicateId { line: line_no, id },
            other => other,
        })?;
    }
    let mut table = table.unwrap_or_else(|| EmbeddingTable::new(0));
    table.manifest = manifest;
    Ok(table)
}

pub fn write_embeddings<F: Scalar, W: Write>(
    mut out: W,
    table: &EmbeddingTable<F>,
) -> Result<(), IngestError> {
    if let Some(m) = &table.manifest {
        serde_json::to_writer(&mut out, &serde_json::json!({ "manifest": m }))
            .map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    for (id, v) in table.iter() {
        serde_json::to_writer(&mut out, &serde_json::json!({ "id": id, "vector": v }))
            .map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

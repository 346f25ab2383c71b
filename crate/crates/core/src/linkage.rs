//! Cross-corpus deduplication.
//!
//! Two records are the same publication when at least three of title,
//! abstract, year, author surnames and DOI carry equal non-null keys, with
//! citation sets counting as a sixth field for records from the same source.
//!
//! Candidate generation blocks on every 3-field combination: each record
//! emits one composite key per combination whose fields are all non-null.
//! A pair matches iff it shares one of these composite keys, so every bucket
//! is a clique of matches and the union-find merge never needs a separate
//! pairwise test. Combinations that include citations also hash the source,
//! which keeps citation equality within one dataset.
//!
//! Each combination is processed as its own pass over `(key, record)`
//! pairs. When a pass holds more pairs than [`SpillConfig::max_in_memory`]
//! they are sorted in chunks, written as runs to the spill directory and
//! merged back, so peak memory beyond the union-find is one chunk.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::{xxh3_128, Xxh3};

use crate::eval::csv_field;
use crate::records::{normalize_text, PublicationRecord, Source};

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("spill: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} records exceed the u32 index space")]
    TooManyRecords(usize),
}

/// Linkage fields, in key-set order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkField {
    Title,
    Abstract,
    Year,
    Surnames,
    Doi,
    Citations,
}

impl LinkField {
    pub const ALL: [LinkField; 6] = [
        LinkField::Title,
        LinkField::Abstract,
        LinkField::Year,
        LinkField::Surnames,
        LinkField::Doi,
        LinkField::Citations,
    ];
}

pub const MIN_SHARED_FIELDS: usize = 3;

/// Hashed, normalized linkage values; `None` where the field is null/empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LinkageKeySet {
    pub title: Option<u128>,
    pub abstract_key: Option<u128>,
    pub year: Option<u128>,
    pub surnames: Option<u128>,
    pub doi: Option<u128>,
    /// Only comparable between records of the same source.
    pub citations: Option<u128>,
}

impl LinkageKeySet {
    pub fn get(&self, field: LinkField) -> Option<u128> {
        match field {
            LinkField::Title => self.title,
            LinkField::Abstract => self.abstract_key,
            LinkField::Year => self.year,
            LinkField::Surnames => self.surnames,
            LinkField::Doi => self.doi,
            LinkField::Citations => self.citations,
        }
    }

    pub fn non_null(&self) -> usize {
        LinkField::ALL.iter().filter(|f| self.get(**f).is_some()).count()
    }
}

fn tagged_hash(tag: u8, text: &str) -> u128 {
    let mut h = Xxh3::new();
    h.update(&[tag]);
    h.update(text.as_bytes());
    h.digest128()
}

fn text_key(tag: u8, text: Option<&str>) -> Option<u128> {
    let norm = normalize_text(text?);
    (!norm.is_empty()).then(|| tagged_hash(tag, &norm.joined()))
}

/// Surname of one author name: the part before the first comma when there
/// is one ("Smith, J."), otherwise the last token ("J. Smith"). Normalized.
pub fn surname_of(name: &str) -> Option<String> {
    let norm = match name.split_once(',') {
        Some((before, _)) => normalize_text(before),
        None => normalize_text(name),
    };
    match name.contains(',') {
        true => (!norm.is_empty()).then(|| norm.joined()),
        false => norm.into_tokens().pop(),
    }
}

const UNIT_SEP: &str = "\u{1f}";

pub fn derive_keys(record: &PublicationRecord) -> LinkageKeySet {
    let mut surnames: Vec<String> = record.authors.iter().filter_map(|a| surname_of(a)).collect();
    surnames.sort_unstable();
    let citations = record
        .citation_ids
        .as_ref()
        .filter(|c| !c.is_empty())
        .map(|c| c.iter().map(String::as_str).collect::<Vec<_>>().join(UNIT_SEP));
    LinkageKeySet {
        title: text_key(b't', record.title.as_deref()),
        abstract_key: text_key(b'a', record.abstract_text.as_deref()),
        year: record.year.map(|y| tagged_hash(b'y', &y.to_string())),
        surnames: (!surnames.is_empty()).then(|| tagged_hash(b's', &surnames.join(UNIT_SEP))),
        doi: record
            .doi
            .as_deref()
            .map(|d| d.trim().to_lowercase())
            .filter(|d| !d.is_empty())
            .map(|d| tagged_hash(b'd', &d)),
        citations: citations.map(|c| tagged_hash(b'c', &c)),
    }
}

/// Number of fields on which both keys are non-null and equal.
pub fn shared_fields(a: &LinkageKeySet, b: &LinkageKeySet, same_source: bool) -> usize {
    LinkField::ALL
        .iter()
        .filter(|&&f| same_source || f != LinkField::Citations)
        .filter(|&&f| matches!((a.get(f), b.get(f)), (Some(x), Some(y)) if x == y))
        .count()
}

pub fn pair_matches(a: &LinkageKeySet, b: &LinkageKeySet, same_source: bool) -> bool {
    shared_fields(a, b, same_source) >= MIN_SHARED_FIELDS
}

/// All 3-field combinations, in a fixed order.
pub fn field_triples() -> Vec<[LinkField; 3]> {
    let f = LinkField::ALL;
    let mut out = Vec::with_capacity(20);
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            for k in j + 1..f.len() {
                out.push([f[i], f[j], f[k]]);
            }
        }
    }
    out
}

/// Composite blocking key of `keys` for one triple, if all three are set.
pub fn block_key(triple_id: u8, triple: &[LinkField; 3], keys: &LinkageKeySet, source: Source) -> Option<u128> {
    let mut buf = [0u8; 1 + 3 * 16 + 1];
    buf[0] = triple_id;
    for (slot, field) in triple.iter().enumerate() {
        let k = keys.get(*field)?;
        buf[1 + slot * 16..1 + (slot + 1) * 16].copy_from_slice(&k.to_le_bytes());
    }
    let len = if triple.contains(&LinkField::Citations) {
        buf[49] = source as u8;
        50
    } else {
        49
    };
    Some(xxh3_128(&buf[..len]))
}

/// Canonical-record and spill settings.
#[derive(Debug, Clone)]
pub struct LinkageConfig {
    /// Earlier sources win canonical selection; unlisted sources rank last.
    pub source_priority: Vec<Source>,
    pub spill: SpillConfig,
}

impl Default for LinkageConfig {
    fn default() -> Self {
        Self {
            source_priority: vec![Source::Wos, Source::Dimensions, Source::Mag],
            spill: SpillConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpillConfig {
    /// Maximum `(key, record)` pairs held in memory per pass.
    pub max_in_memory: usize,
    /// Where spilled runs go; the system temp directory when `None`.
    pub dir: Option<PathBuf>,
}

impl Default for SpillConfig {
    fn default() -> Self {
        Self {
            max_in_memory: 50_000_000,
            dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageCluster {
    pub canonical_id: String,
    /// Sorted ascending.
    pub member_ids: Vec<String>,
    /// Source of each member, aligned with `member_ids`.
    pub sources: Vec<Source>,
}

/// Plain disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = self.parent[x as usize];
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }
}

type Entry = (u128, u32);

fn union_sorted_runs(entries: impl Iterator<Item = Entry>, uf: &mut UnionFind) {
    let mut current: Option<Entry> = None;
    for (key, idx) in entries {
        match current {
            Some((k, first)) if k == key => {
                uf.union(first, idx);
            }
            _ => current = Some((key, idx)),
        }
    }
}

fn write_run(entries: &[Entry], dir: &std::path::Path) -> Result<tempfile::NamedTempFile, LinkageError> {
    let file = tempfile::NamedTempFile::new_in(dir)?;
    let mut w = BufWriter::new(file.reopen()?);
    for (k, i) in entries {
        w.write_all(&k.to_le_bytes())?;
        w.write_all(&i.to_le_bytes())?;
    }
    w.flush()?;
    Ok(file)
}

struct RunReader {
    inner: BufReader<File>,
}

impl RunReader {
    fn next_entry(&mut self) -> Result<Option<Entry>, std::io::Error> {
        let mut buf = [0u8; 20];
        match self.inner.read_exact(&mut buf) {
            Ok(()) => {
                let mut k = [0u8; 16];
                k.copy_from_slice(&buf[..16]);
                let mut i = [0u8; 4];
                i.copy_from_slice(&buf[16..]);
                Ok(Some((u128::from_le_bytes(k), u32::from_le_bytes(i))))
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Union every group of records sharing a key in `entries`, spilling
/// sorted runs to disk when the pass is larger than the memory budget.
fn union_pass(
    mut entries: Vec<Entry>,
    spill: &SpillConfig,
    uf: &mut UnionFind,
) -> Result<usize, LinkageError> {
    let budget = spill.max_in_memory.max(1);
    if entries.len() <= budget {
        entries.par_sort_unstable();
        union_sorted_runs(entries.into_iter(), uf);
        return Ok(0);
    }
    let dir = spill.dir.clone().unwrap_or_else(std::env::temp_dir);
    let mut runs = Vec::new();
    for chunk in entries.chunks_mut(budget) {
        chunk.par_sort_unstable();
        runs.push(write_run(chunk, &dir)?);
    }
    drop(entries);
    let mut readers: Vec<RunReader> = runs
        .iter()
        .map(|f| Ok(RunReader { inner: BufReader::new(f.reopen()?) }))
        .collect::<Result<_, std::io::Error>>()?;
    let mut heap = BinaryHeap::new();
    for (r, reader) in readers.iter_mut().enumerate() {
        if let Some((k, i)) = reader.next_entry()? {
            heap.push(Reverse((k, i, r)));
        }
    }
    let mut error = None;
    let iter = std::iter::from_fn(|| {
        let Reverse((k, i, r)) = heap.pop()?;
        match readers[r].next_entry() {
            Ok(Some((nk, ni))) => heap.push(Reverse((nk, ni, r))),
            Ok(None) => {}
            Err(e) => error = Some(e),
        }
        Some((k, i))
    });
    union_sorted_runs(iter, uf);
    if let Some(e) = error {
        return Err(e.into());
    }
    Ok(runs.len())
}

/// Statistics from one clustering run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageStats {
    pub records: usize,
    pub clusters: usize,
    pub block_entries: usize,
    pub spilled_runs: usize,
}

/// Partition `records` into duplicate clusters.
///
/// Output is sorted by canonical id and does not depend on input order.
pub fn cluster(
    records: &[PublicationRecord],
    config: &LinkageConfig,
) -> Result<(Vec<LinkageCluster>, LinkageStats), LinkageError> {
    let n = records.len();
    if n > u32::MAX as usize {
        return Err(LinkageError::TooManyRecords(n));
    }
    let keys: Vec<LinkageKeySet> = records.par_iter().map(derive_keys).collect();
    let mut uf = UnionFind::new(n);
    let mut stats = LinkageStats {
        records: n,
        ..Default::default()
    };
    for (t, triple) in field_triples().iter().enumerate() {
        let entries: Vec<Entry> = keys
            .par_iter()
            .zip(records.par_iter())
            .enumerate()
            .filter_map(|(i, (k, r))| block_key(t as u8, triple, k, r.source).map(|bk| (bk, i as u32)))
            .collect();
        stats.block_entries += entries.len();
        stats.spilled_runs += union_pass(entries, &config.spill, &mut uf)?;
    }

    let mut groups: std::collections::HashMap<u32, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..n {
        groups.entry(uf.find(i as u32)).or_default().push(i);
    }
    let rank = |i: usize| {
        let src = config
            .source_priority
            .iter()
            .position(|s| *s == records[i].source)
            .unwrap_or(config.source_priority.len());
        (src, Reverse(keys[i].non_null()), records[i].id.as_str())
    };
    let mut clusters: Vec<LinkageCluster> = groups
        .into_values()
        .map(|mut members| {
            let canonical = *members.iter().min_by_key(|&&i| rank(i)).expect("non-empty");
            members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
            LinkageCluster {
                canonical_id: records[canonical].id.clone(),
                member_ids: members.iter().map(|&i| records[i].id.clone()).collect(),
                sources: members.iter().map(|&i| records[i].source).collect(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.canonical_id.cmp(&b.canonical_id));
    stats.clusters = clusters.len();
    Ok((clusters, stats))
}

/// One JSON object per cluster.
pub fn write_clusters_jsonl<W: Write>(mut out: W, clusters: &[LinkageCluster]) -> std::io::Result<()> {
    for c in clusters {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// `member_id,canonical_id`, sorted by member id.
pub fn crosswalk_csv(clusters: &[LinkageCluster]) -> String {
    let mut rows: Vec<(&str, &str)> = clusters
        .iter()
        .flat_map(|c| c.member_ids.iter().map(move |m| (m.as_str(), c.canonical_id.as_str())))
        .collect();
    rows.sort_unstable();
    let mut out = String::from("member_id,canonical_id\n");
    for (m, c) in rows {
        let _ = writeln!(out, "{},{}", csv_field(m), csv_field(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, source: Source) -> PublicationRecord {
        PublicationRecord::new(id, source)
    }

    #[test]
    fn surname_heuristic() {
        assert_eq!(surname_of("Smith, J.").as_deref(), Some("smith"));
        assert_eq!(surname_of("DOE, Jane").as_deref(), Some("doe"));
        assert_eq!(surname_of("jane doe").as_deref(), Some("doe"));
        assert_eq!(surname_of("van der Berg, A").as_deref(), Some("van der berg"));
        assert_eq!(surname_of("  "), None);
    }

    #[test]
    fn surname_keys_ignore_name_order() {
        let mut a = rec("a", Source::Wos);
        a.authors = vec!["Smith, J.".into(), "DOE, Jane".into()];
        let mut b = rec("b", Source::Mag);
        b.authors = vec!["jane doe".into(), "j smith".into()];
        assert_eq!(derive_keys(&a).surnames, derive_keys(&b).surnames);
        assert!(derive_keys(&a).surnames.is_some());
    }

    #[test]
    fn null_fields_give_null_keys() {
        let mut r = rec("a", Source::Wos);
        r.doi = Some("  ".into());
        r.title = Some("!!!".into());
        let k = derive_keys(&r);
        assert_eq!(k, LinkageKeySet::default());
        r.doi = Some("10.1000/ABC".into());
        let mut s = r.clone();
        s.doi = Some("10.1000/abc".into());
        assert_eq!(derive_keys(&r).doi, derive_keys(&s).doi);
        assert_eq!(derive_keys(&r), derive_keys(&r.clone()));
    }

    fn keys(fields: &[(LinkField, u128)]) -> LinkageKeySet {
        let mut k = LinkageKeySet::default();
        for (f, v) in fields {
            let slot = match f {
                LinkField::Title => &mut k.title,
                LinkField::Abstract => &mut k.abstract_key,
                LinkField::Year => &mut k.year,
                LinkField::Surnames => &mut k.surnames,
                LinkField::Doi => &mut k.doi,
                LinkField::Citations => &mut k.citations,
            };
            *slot = Some(*v);
        }
        k
    }

    #[test]
    fn pair_rule() {
        use LinkField::*;
        let a = keys(&[(Title, 1), (Year, 2), (Doi, 3)]);
        assert!(pair_matches(&a, &a, false));
        let b = keys(&[(Title, 1), (Year, 2)]);
        assert!(!pair_matches(&b, &b, false));
        let c = keys(&[(Title, 1), (Year, 2), (Citations, 9)]);
        assert!(!pair_matches(&c, &c, false));
        assert!(pair_matches(&c, &c, true));
        let d = keys(&[(Title, 1), (Year, 2), (Doi, 4)]);
        assert!(!pair_matches(&a, &d, true));
    }

    #[test]
    fn twenty_triples() {
        let t = field_triples();
        assert_eq!(t.len(), 20);
        let mut dedup = t.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 20);
    }

    fn full(id: &str, src: Source, title: &str, abs: &str, year: i32, doi: Option<&str>) -> PublicationRecord {
        let mut r = rec(id, src);
        r.title = Some(title.into());
        r.abstract_text = Some(abs.into());
        r.year = Some(year);
        r.doi = doi.map(Into::into);
        r
    }

    #[test]
    fn transitive_chain() {
        // A~B on (title, abstract, year); B~C on (year, doi, title') with C's title
        // differing from A's, so A and C share only the year.
        let a = full("A", Source::Mag, "graph networks", "abstract one", 2015, None);
        let mut b = full("B", Source::Wos, "graph networks", "abstract one", 2015, Some("10.1/x"));
        b.authors = vec!["Lee, K".into()];
        let mut c = full("C", Source::Dimensions, "other title", "different", 2015, Some("10.1/x"));
        c.authors = vec!["K. Lee".into()];
        assert!(pair_matches(&derive_keys(&a), &derive_keys(&b), false));
        assert!(pair_matches(&derive_keys(&b), &derive_keys(&c), false));
        assert!(!pair_matches(&derive_keys(&a), &derive_keys(&c), false));
        let (clusters, stats) = cluster(&[a, b, c], &LinkageConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_ids, ["A", "B", "C"]);
        assert_eq!(clusters[0].canonical_id, "B");
        assert_eq!(stats.clusters, 1);
    }

    #[test]
    fn citations_only_within_source() {
        let mut a = rec("a", Source::Wos);
        a.title = Some("t".into());
        a.year = Some(2012);
        a.citation_ids = Some(["x".to_string(), "y".to_string()].into());
        let mut b = a.clone();
        b.id = "b".into();
        b.source = Source::Mag;
        let (clusters, _) = cluster(&[a.clone(), b.clone()], &LinkageConfig::default()).unwrap();
        assert_eq!(clusters.len(), 2);
        b.source = Source::Wos;
        let (clusters, _) = cluster(&[a, b], &LinkageConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
    }

    #[test]
    fn canonical_prefers_source_then_completeness() {
        let a = full("a", Source::Mag, "t", "x", 2012, Some("d"));
        let mut b = full("b", Source::Dimensions, "t", "x", 2012, None);
        let mut c = full("c", Source::Dimensions, "t", "x", 2012, Some("d"));
        let (cl, _) = cluster(&[a.clone(), b.clone(), c.clone()], &LinkageConfig::default()).unwrap();
        assert_eq!(cl[0].canonical_id, "c");
        b.source = Source::Wos;
        let (cl, _) = cluster(&[a.clone(), b.clone(), c.clone()], &LinkageConfig::default()).unwrap();
        assert_eq!(cl[0].canonical_id, "b");
        b.source = Source::Dimensions;
        c.doi = None;
        let (cl, _) = cluster(&[a, b, c], &LinkageConfig::default()).unwrap();
        assert_eq!(cl[0].canonical_id, "b");
    }

    #[test]
    fn spill_path_matches_in_memory() {
        let recs: Vec<PublicationRecord> = (0..60)
            .map(|i| full(&format!("r{i}"), Source::Wos, &format!("title {}", i / 3), &format!("abs {}", i / 3), 2015, None))
            .collect();
        let (mem, _) = cluster(&recs, &LinkageConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = LinkageConfig {
            spill: SpillConfig { max_in_memory: 7, dir: Some(dir.path().to_path_buf()) },
            ..Default::default()
        };
        let (spilled, stats) = cluster(&recs, &cfg).unwrap();
        assert_eq!(mem, spilled);
        assert_eq!(mem.len(), 20);
        assert!(stats.spilled_runs > 0);
    }

    #[test]
    fn output_files() {
        let c = vec![LinkageCluster {
            canonical_id: "b".into(),
            member_ids: vec!["a".into(), "b".into()],
            sources: vec![Source::Mag, Source::Wos],
        }];
        assert_eq!(crosswalk_csv(&c), "member_id,canonical_id\na,b\nb,b\n");
        let mut buf = Vec::new();
        write_clusters_jsonl(&mut buf, &c).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"canonical_id\":\"b\",\"member_ids\":[\"a\",\"b\"],\"sources\":[\"mag\",\"wos\"]}\n"
        );
    }
}

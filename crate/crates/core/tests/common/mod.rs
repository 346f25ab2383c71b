//! Reference implementations written independently of the library.
//! They favour obviousness over speed: character recursion instead of
//! segment search, string keys instead of hashes, quadratic pair scans.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use delineate_core::records::{PublicationRecord, Source};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Text

/// Lowercase, keep `[alnum*]`, split on everything else.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        let lc = c.to_lowercase().next().unwrap_or(c);
        if lc.is_alphanumeric() || lc == '*' {
            cur.push(lc);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// `*` matches any run of characters, including none.
pub fn glob_chars(pattern: &[char], text: &[char]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some(('*', rest)) => (0..=text.len()).any(|k| glob_chars(rest, &text[k..])),
        Some((p, rest)) => text.first() == Some(p) && glob_chars(rest, &text[1..]),
    }
}

pub fn glob_token(pattern: &str, token: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = token.chars().collect();
    glob_chars(&p, &t)
}

/// Start offsets of every window of `text` tokens matched by `term`.
pub fn oracle_match_starts(term: &str, text: &str) -> Vec<usize> {
    let pat = oracle_tokens(term);
    let toks = oracle_tokens(text);
    if pat.is_empty() || pat.len() > toks.len() {
        return Vec::new();
    }
    (0..=toks.len() - pat.len())
        .filter(|&s| pat.iter().zip(&toks[s..]).all(|(p, t)| glob_token(p, t)))
        .collect()
}

pub fn oracle_matches(term: &str, text: &str) -> bool {
    !oracle_match_starts(term, text).is_empty()
}

// ---------------------------------------------------------------------------
// Lexicon features

/// Count / distinct / proportion / weighted for one field, by enumerating
/// every (term, window) pair.
pub fn oracle_field_features(lexicon: &[(String, u8)], text: &str) -> [f64; 10] {
    let toks = oracle_tokens(text);
    let mut out = [0.0; 10];
    let mut covered = vec![[false; 3]; toks.len()];
    for (term, score) in lexicon {
        let lvl = (*score - 1) as usize;
        let starts = oracle_match_starts(term, text);
        let width = oracle_tokens(term).len();
        out[lvl] += starts.len() as f64;
        if !starts.is_empty() {
            out[3 + lvl] += 1.0;
        }
        for s in starts {
            for c in &mut covered[s..s + width] {
                c[lvl] = true;
            }
        }
    }
    for lvl in 0..3 {
        if !toks.is_empty() {
            out[6 + lvl] = covered.iter().filter(|c| c[lvl]).count() as f64 / toks.len() as f64;
        }
    }
    out[9] = out[0] + 2.0 * out[1] + 3.0 * out[2];
    out
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub fn brute_counts(pairs: &[(bool, bool)]) -> Counts {
    let mut c = Counts::default();
    for &(pred, actual) in pairs {
        if pred && actual {
            c.tp += 1;
        }
        if pred && !actual {
            c.fp += 1;
        }
        if !pred && actual {
            c.fn_ += 1;
        }
        if !pred && !actual {
            c.tn += 1;
        }
    }
    c
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(precision, recall, f1)` of the positive class.
pub fn brute_prf(c: Counts) -> (f64, f64, f64) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Support-weighted F1 over both classes.
pub fn brute_weighted_f1(c: Counts) -> f64 {
    let pos = brute_prf(c).2;
    let neg = brute_prf(Counts { tp: c.tn, fp: c.fn_, fn_: c.fp, tn: c.tp }).2;
    let (sp, sn) = ((c.tp + c.fn_) as f64, (c.tn + c.fp) as f64);
    if sp + sn == 0.0 {
        0.0
    } else {
        (pos * sp + neg * sn) / (sp + sn)
    }
}

// ---------------------------------------------------------------------------
// Labels

/// Relevance by plain set intersection after replacing each code with the
/// smallest member of its alias component.
pub fn oracle_relevant(subjects: &[String], relevant: &[&str], aliases: &[(&str, &str)]) -> bool {
    let canon = |code: &str| -> String {
        let mut comp: BTreeSet<String> = BTreeSet::from([code.to_string()]);
        loop {
            let before = comp.len();
            for (a, b) in aliases {
                if comp.contains(*a) || comp.contains(*b) {
                    comp.insert(a.to_string());
                    comp.insert(b.to_string());
                }
            }
            if comp.len() == before {
                break;
            }
        }
        comp.into_iter().next().unwrap_or_default()
    };
    let rel: BTreeSet<String> = relevant.iter().map(|s| canon(s)).collect();
    subjects.iter().any(|s| rel.contains(&canon(s)))
}

// ---------------------------------------------------------------------------
// Linkage

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleKeys {
    pub fields: [Option<String>; 6],
}

fn surname(name: &str) -> Option<String> {
    if let Some(idx) = name.find(',') {
        let t = oracle_tokens(&name[..idx]);
        (!t.is_empty()).then(|| t.join(" "))
    } else {
        oracle_tokens(name).pop()
    }
}

pub fn oracle_keys(r: &PublicationRecord) -> OracleKeys {
    let text = |t: &Option<String>| {
        t.as_deref()
            .map(oracle_tokens)
            .filter(|v| !v.is_empty())
            .map(|v| v.join(" "))
    };
    let mut names: Vec<String> = r.authors.iter().filter_map(|a| surname(a)).collect();
    names.sort();
    OracleKeys {
        fields: [
            text(&r.title),
            text(&r.abstract_text),
            r.year.map(|y| y.to_string()),
            (!names.is_empty()).then(|| names.join("|")),
            r.doi
                .as_deref()
                .map(|d| d.trim().to_lowercase())
                .filter(|d| !d.is_empty()),
            r.citation_ids
                .as_ref()
                .filter(|c| !c.is_empty())
                .map(|c| c.iter().cloned().collect::<Vec<_>>().join("|")),
        ],
    }
}

pub fn oracle_pair(a: &PublicationRecord, ka: &OracleKeys, b: &PublicationRecord, kb: &OracleKeys) -> bool {
    let mut shared = 0;
    for f in 0..6 {
        if f == 5 && a.source != b.source {
            continue;
        }
        if let (Some(x), Some(y)) = (&ka.fields[f], &kb.fields[f]) {
            if x == y {
                shared += 1;
            }
        }
    }
    shared >= 3
}

/// Records drawn from tiny value pools so that partial agreements (two
/// fields, three fields, citations across sources) are common.
pub fn collision_corpus(n: usize, seed: u64) -> Vec<PublicationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = [Source::Wos, Source::Dimensions, Source::Mag];
    (0..n)
        .map(|i| {
            let mut r = PublicationRecord::new(format!("id{i:04}"), *sources.choose(&mut rng).unwrap());
            let pick = |rng: &mut ChaCha8Rng, k: u32| rng.gen_range(0..k);
            if rng.gen_bool(0.8) {
                r.title = Some(["Deep Nets", "deep nets!", "Graph Cuts", "graph  cuts", "Kernels"][pick(&mut rng, 5) as usize].into());
            }
            if rng.gen_bool(0.6) {
                r.abstract_text = Some(format!("abstract {}", pick(&mut rng, 3)));
            }
            if rng.gen_bool(0.8) {
                r.year = Some(2015 + pick(&mut rng, 2) as i32);
            }
            if rng.gen_bool(0.6) {
                r.authors = match pick(&mut rng, 3) {
                    0 => vec!["Smith, J.".into(), "Lee, K".into()],
                    1 => vec!["K. Lee".into(), "John Smith".into()],
                    _ => vec!["Wu, X".into()],
                };
            }
            if rng.gen_bool(0.4) {
                r.doi = Some(["10.1/a", "10.1/A ", "10.1/b"][pick(&mut rng, 3) as usize].into());
            }
            if rng.gen_bool(0.5) {
                r.citation_ids = Some(match pick(&mut rng, 2) {
                    0 => BTreeSet::from(["c1".to_string(), "c2".to_string()]),
                    _ => BTreeSet::from(["c3".to_string()]),
                });
            }
            r
        })
        .collect()
}

/// Connected components of the all-pairs match graph, as sorted id lists.
pub fn oracle_clusters(records: &[PublicationRecord]) -> Vec<Vec<String>> {
    let keys: Vec<OracleKeys> = records.iter().map(oracle_keys).collect();
    let n = records.len();
    let mut comp: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if oracle_pair(&records[i], &keys[i], &records[j], &keys[j]) {
                let (from, to) = (comp[j], comp[i]);
                if from != to {
                    for c in comp.iter_mut() {
                        if *c == from {
                            *c = to;
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, c) in comp.into_iter().enumerate() {
        groups.entry(c).or_default().push(records[i].id.clone());
    }
    let mut out: Vec<Vec<String>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    out.sort();
    out
}

/// Canonical pick by brute force: best source rank, then most non-null
/// key fields, then smallest id.
pub fn oracle_canonical(members: &[&PublicationRecord], priority: &[Source]) -> String {
    let mut best: Option<(usize, i64, &str)> = None;
    for r in members {
        let rank = priority.iter().position(|s| *s == r.source).unwrap_or(priority.len());
        let filled = oracle_keys(r).fields.iter().filter(|f| f.is_some()).count() as i64;
        let key = (rank, -filled, r.id.as_str());
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    best.map(|b| b.2.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Corpus line scan

/// Primary and any-position subject tallies read straight from JSONL text,
/// with `stat.ML` folded into `cs.LG`.
pub fn line_scan_subject_counts(jsonl: &str) -> BTreeMap<String, (u64, u64)> {
    let six = ["cs.AI", "cs.CL", "cs.CV", "cs.LG", "cs.MA", "cs.RO"];
    let fold = |s: &str| if s == "stat.ML" { "cs.LG".to_string() } else { s.to_string() };
    let mut out: BTreeMap<String, (u64, u64)> = six.iter().map(|s| (s.to_string(), (0, 0))).collect();
    out.insert("any".into(), (0, 0));
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).expect("fixture is valid JSON");
        let cats: Vec<String> = match &v["categories"] {
            serde_json::Value::String(s) => s.split_whitespace().map(fold).collect(),
            serde_json::Value::Array(a) => a.iter().filter_map(|x| x.as_str()).map(fold).collect(),
            _ => continue,
        };
        let mut any_hit = false;
        for s in six {
            let entry = out.get_mut(s).unwrap();
            if cats.first().map(String::as_str) == Some(s) {
                entry.0 += 1;
            }
            if cats.iter().any(|c| c == s) {
                entry.1 += 1;
                any_hit = true;
            }
        }
        let any = out.get_mut("any").unwrap();
        if cats.first().is_some_and(|c| six.contains(&c.as_str())) {
            any.0 += 1;
        }
        if any_hit {
            any.1 += 1;
        }
    }
    out
}

//! Train/dev/test splitting, per-year metric reports and field cross-tabs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::records::{PublicationRecord, SubjectConfig};
use crate::scalar::Scalar;

/// Strata smaller than this are pooled by year.
pub const MIN_STRATUM: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("record {id} has no year")]
    MissingYear { id: String },
    #[error("record {id} has no subject labels")]
    MissingSubjects { id: String },
    #[error("prediction and label ids differ ({only_predicted} only predicted, {only_labeled} only labeled; e.g. `{example}`)")]
    KeyMismatch {
        only_predicted: usize,
        only_labeled: usize,
        example: String,
    },
    #[error("invalid split fractions dev={dev} test={test}")]
    InvalidFractions { dev: f64, test: f64 },
    #[error("split file line {line}: {message}")]
    SplitFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { dev: 0.10, test: 0.10 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if ok(self.dev) && ok(self.test) && self.dev + self.test <= 1.0 {
            Ok(())
        } else {
            Err(EvalError::InvalidFractions {
                dev: self.dev,
                test: self.test,
            })
        }
    }
}

/// Effective stratum after pooling, with its realised sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub key: String,
    pub size: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<String, Partition>,
    pub strata: Vec<StratumSummary>,
    pub seed: u64,
    pub fractions: SplitFractions,
}

impl SplitAssignment {
    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        self.assignments.get(id).copied()
    }

    pub fn ids(&self, part: Partition) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, p)| **p == part)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, part: Partition) -> usize {
        self.ids(part).count()
    }

    /// One `{"id": ..., "partition": ...}` line per record, id order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), EvalError> {
        for (id, part) in &self.assignments {
            serde_json::to_writer(&mut out, &SplitLine { id: id.clone(), partition: *part })
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Read an assignment file; stratum summaries are not stored in it.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<BTreeMap<String, Partition>, EvalError> {
        let mut map = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: SplitLine = serde_json::from_str(&line).map_err(|e| EvalError::SplitFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
            map.insert(row.id, row.partition);
        }
        Ok(map)
    }
}

#[derive(Serialize, Deserialize)]
struct SplitLine {
    id: String,
    partition: Partition,
}

/// round-half-away-from-zero of `fraction * n`.
pub fn quota(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Stratified train/dev/test assignment.
///
/// Stratum key is (year, set of relevant subject flags). Strata with fewer
/// than [`MIN_STRATUM`] records are pooled into one stratum per year. Inside
/// a stratum records are ordered by a seeded hash of their id; the first
/// `round(test * n)` go to test and the next `round(dev * n)` to dev.
pub fn stratified_split(
    records: &[PublicationRecord],
    config: &SubjectConfig,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, EvalError> {
    fractions.validate()?;
    let mut strata: BTreeMap<(i32, String), Vec<&str>> = BTreeMap::new();
    for r in records {
        let year = r.year.ok_or_else(|| EvalError::MissingYear { id: r.id.clone() })?;
        if r.subjects.is_empty() {
            return Err(EvalError::MissingSubjects { id: r.id.clone() });
        }
        let flags: Vec<String> = config.relevant_flags(r).into_iter().collect();
        strata
            .entry((year, flags.join("+")))
            .or_default()
            .push(r.id.as_str());
    }

    let mut effective: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for ((year, flags), ids) in strata {
        let key = if ids.len() < MIN_STRATUM {
            format!("{year}|*")
        } else {
            format!("{year}|{flags}")
        };
        effective.entry(key).or_default().extend(ids);
    }

    let mut assignments = BTreeMap::new();
    let mut summaries = Vec::with_capacity(effective.len());
    for (key, mut ids) in effective {
        ids.sort_by_key(|id| (xxh3_64_with_seed(id.as_bytes(), seed), *id));
        let n = ids.len();
        let n_test = quota(fractions.test, n).min(n);
        let n_dev = quota(fractions.dev, n).min(n - n_test);
        for (i, id) in ids.iter().enumerate() {
            let part = if i < n_test {
                Partition::Test
            } else if i < n_test + n_dev {
                Partition::Dev
            } else {
                Partition::Train
            };
            assignments.insert(id.to_string(), part);
        }
        summaries.push(StratumSummary {
            key,
            size: n,
            dev: n_dev,
            test: n_test,
        });
    }
    Ok(SplitAssignment {
        assignments,
        strata: summaries,
        seed,
        fractions,
    })
}

// ---------------------------------------------------------------------------
// Metrics

/// Binary confusion counts with "positive" as the class of interest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (pred, label) in pairs {
            c.add(pred, label);
        }
        c
    }

    #[inline]
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(mut self, other: Confusion) -> Confusion {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
        self
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Same counts seen from the negative class.
    pub fn flipped(&self) -> Confusion {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn positive<F: Scalar>(&self) -> ClassMetrics<F> {
        ClassMetrics::from_counts(self.tp, self.fp, self.fn_)
    }

    pub fn negative<F: Scalar>(&self) -> ClassMetrics<F> {
        self.flipped().positive()
    }
}

fn ratio<F: Scalar>(num: u64, den: u64) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::of(num as f64) / F::of(den as f64)
    }
}

/// Precision, recall and F1 for one class; zero-denominator ratios are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub support: u64,
}

impl<F: Scalar> ClassMetrics<F> {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision: F = ratio(tp, tp + fp);
        let recall: F = ratio(tp, tp + fn_);
        let sum = precision + recall;
        let f1 = if sum == F::zero() {
            F::zero()
        } else {
            F::of(2.0) * precision * recall / sum
        };
        Self {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

/// Support-weighted mean of class F1 scores.
pub fn weighted_f1<F: Scalar>(classes: &[ClassMetrics<F>]) -> F {
    let total: u64 = classes.iter().map(|c| c.support).sum();
    if total == 0 {
        return F::zero();
    }
    let acc: F = classes
        .iter()
        .map(|c| c.f1 * F::of(c.support as f64))
        .sum();
    acc / F::of(total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow<F> {
    /// `None` for the aggregate row.
    pub year: Option<i32>,
    pub confusion: Confusion,
    pub positive: ClassMetrics<F>,
    pub negative: ClassMetrics<F>,
    pub weighted_f1: F,
    pub total: u64,
}

impl<F: Scalar> ReportRow<F> {
    pub fn from_confusion(year: Option<i32>, confusion: Confusion) -> Self {
        let positive = confusion.positive();
        let negative = confusion.negative();
        Self {
            year,
            confusion,
            positive,
            negative,
            weighted_f1: weighted_f1(&[positive, negative]),
            total: confusion.total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<F> {
    pub per_year: Vec<ReportRow<F>>,
    pub aggregate: ReportRow<F>,
}

/// Per-year and aggregate metrics for both classes.
///
/// Ids absent from `years` count toward the aggregate row only.
pub fn compute_metrics<F: Scalar>(
    predictions: &HashMap<String, bool>,
    labels: &HashMap<String, bool>,
    years: &HashMap<String, i32>,
) -> Result<EvalReport<F>, EvalError> {
    let only_predicted: Vec<&String> = predictions.keys().filter(|k| !labels.contains_key(*k)).collect();
    let only_labeled: Vec<&String> = labels.keys().filter(|k| !predictions.contains_key(*k)).collect();
    if !only_predicted.is_empty() || !only_labeled.is_empty() {
        let example = only_predicted
            .iter()
            .chain(&only_labeled)
            .min()
            .map(|s| s.to_string())
            .unwrap_or_default();
        return Err(EvalError::KeyMismatch {
            only_predicted: only_predicted.len(),
            only_labeled: only_labeled.len(),
            example,
        });
    }

    let (by_year, aggregate) = predictions
        .par_iter()
        .fold(
            || (BTreeMap::<i32, Confusion>::new(), Confusion::default()),
            |(mut by_year, mut all), (id, &pred)| {
                let actual = labels[id];
                all.add(pred, actual);
                if let Some(&y) = years.get(id) {
                    by_year.entry(y).or_default().add(pred, actual);
                }
                (by_year, all)
            },
        )
        .reduce(
            || (BTreeMap::new(), Confusion::default()),
            |(mut a, ca), (b, cb)| {
                for (y, c) in b {
                    let e = a.entry(y).or_default();
                    *e = e.merge(c);
                }
                (a, ca.merge(cb))
            },
        );

    Ok(EvalReport {
        per_year: by_year
            .into_iter()
            .map(|(y, c)| ReportRow::from_confusion(Some(y), c))
            .collect(),
        aggregate: ReportRow::from_confusion(None, aggregate),
    })
}

// ---------------------------------------------------------------------------
// Report rendering

/// Which report layout to print.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableLayout {
    /// Year, positive precision/recall/F1, support, total.
    PositiveOnly,
    /// Positive class, negative class and weighted average.
    #[default]
    TwoClass,
}

/// `.76`-style two-decimal rendering; `1.00` keeps its leading digit.
pub fn fmt_metric<F: Scalar>(v: F) -> String {
    let s = format!("{:.2}", v.as_f64());
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

/// Thousands separators: `106033` → `106,033`.
pub fn fmt_count(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn align_table(rows: &[Vec<String>], rule_before_last: bool) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let render = |r: &Vec<String>| {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        cells.join("  ").trim_end().to_string()
    };
    let total_width = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    let rule = "-".repeat(total_width);
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        if i == 1 || (rule_before_last && i + 1 == rows.len() && rows.len() > 2) {
            out.push_str(&rule);
            out.push('\n');
        }
        out.push_str(&render(r));
        out.push('\n');
    }
    out
}

fn year_label(y: Option<i32>) -> String {
    y.map_or_else(|| "All".to_string(), |y| y.to_string())
}

impl<F: Scalar> EvalReport<F> {
    pub fn rows(&self) -> impl Iterator<Item = &ReportRow<F>> {
        self.per_year.iter().chain(std::iter::once(&self.aggregate))
    }

    /// Aligned plain-text table with two-decimal metrics.
    pub fn render_text(&self, layout: TableLayout) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        match layout {
            TableLayout::PositiveOnly => {
                rows.push(
                    ["Year", "Precision", "Recall", "F1", "Support", "Total"]
                        .map(String::from)
                        .to_vec(),
                );
                for r in self.rows() {
                    rows.push(vec![
                        year_label(r.year),
                        fmt_metric(r.positive.precision),
                        fmt_metric(r.positive.recall),
                        fmt_metric(r.positive.f1),
                        fmt_count(r.positive.support),
                        fmt_count(r.total),
                    ]);
                }
            }
            TableLayout::TwoClass => {
                rows.push(
                    [
                        "Year", "Pos P", "Pos R", "Pos F1", "Pos Support", "Neg P", "Neg R",
                        "Neg F1", "Neg Support", "Wtd F1", "Support",
                    ]
                    .map(String::from)
                    .to_vec(),
                );
                for r in self.rows() {
                    rows.push(vec![
                        year_label(r.year),
                        fmt_metric(r.positive.precision),
                        fmt_metric(r.positive.recall),
                        fmt_metric(r.positive.f1),
                        fmt_count(r.positive.support),
                        fmt_metric(r.negative.precision),
                        fmt_metric(r.negative.recall),
                        fmt_metric(r.negative.f1),
                        fmt_count(r.negative.support),
                        fmt_metric(r.weighted_f1),
                        fmt_count(r.total),
                    ]);
                }
            }
        }
        align_table(&rows, true)
    }

    /// Full-precision CSV, one row per year plus `All`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "year,tp,fp,fn,tn,pos_precision,pos_recall,pos_f1,pos_support,\
             neg_precision,neg_recall,neg_f1,neg_support,weighted_f1,total\n",
        );
        for r in self.rows() {
            let c = &r.confusion;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                year_label(r.year),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                r.positive.precision,
                r.positive.recall,
                r.positive.f1,
                r.positive.support,
                r.negative.precision,
                r.negative.recall,
                r.negative.f1,
                r.negative.support,
                r.weighted_f1,
                r.total
            );
        }
        out
    }
}

/// Long-format `method,year,f1` rows (positive-class F1) for plotting.
pub fn f1_by_year_csv<F: Scalar>(reports: &[(&str, &EvalReport<F>)]) -> String {
    let mut out = String::from("method,year,f1\n");
    for (method, report) in reports {
        for r in &report.per_year {
            let _ = writeln!(out, "{method},{},{}", year_label(r.year), r.positive.f1);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Subject counts

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectCount {
    /// Canonical code, or `"any"` for the union row.
    pub subject: String,
    pub primary: u64,
    pub including_cross_posts: u64,
}

/// Per-subject record counts by primary subject and including cross-posts,
/// plus an `any` row for the union.
pub fn subject_counts(records: &[PublicationRecord], config: &SubjectConfig) -> Vec<SubjectCount> {
    let groups = config.groups();
    let mut rows: Vec<SubjectCount> = groups
        .iter()
        .map(|(canon, _)| SubjectCount {
            subject: canon.clone(),
            primary: 0,
            including_cross_posts: 0,
        })
        .collect();
    let mut any = SubjectCount {
        subject: "any".into(),
        primary: 0,
        including_cross_posts: 0,
    };
    for r in records {
        let Some(primary) = r.primary_subject() else {
            continue;
        };
        let primary = config.canonical(primary);
        let flags = config.relevant_flags(r);
        for (row, (canon, _)) in rows.iter_mut().zip(&groups) {
            if primary == canon {
                row.primary += 1;
            }
            if flags.contains(canon) {
                row.including_cross_posts += 1;
            }
        }
        if groups.iter().any(|(c, _)| c == primary) {
            any.primary += 1;
        }
        if !flags.is_empty() {
            any.including_cross_posts += 1;
        }
    }
    rows.push(any);
    rows
}

// ---------------------------------------------------------------------------
// Field cross-tabulation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstabRow<F> {
    pub field: String,
    pub members: u64,
    /// Members predicted relevant, per method (same order as `methods`).
    pub relevant: Vec<u64>,
    /// `100 * relevant / members`; `None` for fields without members.
    pub percent: Vec<Option<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosstab<F> {
    pub methods: Vec<String>,
    pub rows: Vec<CrosstabRow<F>>,
}

/// Share of each field's members that each method predicts relevant.
///
/// A record belongs to every field where its score is strictly positive.
/// A record missing from a method's predictions counts as not relevant for
/// that method. Fields that occur only with non-positive scores are kept
/// with zero members.
pub fn field_crosstab<F: Scalar>(
    records: &[PublicationRecord],
    predictions: &BTreeMap<String, HashMap<String, bool>>,
) -> Crosstab<F> {
    let methods: Vec<String> = predictions.keys().cloned().collect();
    let mut counts: BTreeMap<&str, (u64, Vec<u64>)> = BTreeMap::new();
    for r in records {
        for (field, &score) in &r.field_scores {
            let entry = counts
                .entry(field.as_str())
                .or_insert_with(|| (0, vec![0; methods.len()]));
            if score > 0.0 {
                entry.0 += 1;
                for (slot, preds) in entry.1.iter_mut().zip(predictions.values()) {
                    if preds.get(&r.id).copied().unwrap_or(false) {
                        *slot += 1;
                    }
                }
            }
        }
    }
    let rows = counts
        .into_iter()
        .map(|(field, (members, relevant))| CrosstabRow {
            field: field.to_string(),
            members,
            percent: relevant
                .iter()
                .map(|&k| (members > 0).then(|| F::of(100.0) * ratio::<F>(k, members)))
                .collect(),
            relevant,
        })
        .collect();
    Crosstab { methods, rows }
}

impl<F: Scalar> Crosstab<F> {
    /// Integer percents, as in a publication table.
    pub fn render_text(&self) -> String {
        let mut rows = vec![{
            let mut h = vec!["Field".to_string(), "Count".to_string()];
            h.extend(self.methods.iter().map(|m| format!("{m} %")));
            h
        }];
        for r in &self.rows {
            let mut row = vec![r.field.clone(), fmt_count(r.members)];
            row.extend(r.percent.iter().map(|p| match p {
                Some(p) => format!("{:.0}", p.as_f64()),
                None => "-".to_string(),
            }));
            rows.push(row);
        }
        align_table(&rows, false)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,members");
        for m in &self.methods {
            let _ = write!(out, ",{m}_relevant,{m}_percent");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", csv_field(&r.field), r.members);
            for (k, p) in r.relevant.iter().zip(&r.percent) {
                match p {
                    Some(p) => {
                        let _ = write!(out, ",{k},{p}");
                    }
                    None => {
                        let _ = write!(out, ",{k},");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Quote a CSV cell when it contains a delimiter, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

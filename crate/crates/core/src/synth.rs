//! Seeded synthetic data for tests, benchmarks and smoke runs.
//!
//! Nothing here is used by the pipeline itself. Every generator is a pure
//! function of its arguments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::EmbeddingTable;
use crate::learners::Dataset;
use crate::records::{PublicationRecord, Source};

fn word(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..=4);
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
        w.push(*VOWELS.choose(rng).expect("non-empty") as char);
    }
    w
}

fn sentence(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Records with known duplicate structure.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub records: Vec<PublicationRecord>,
    /// The true partition: sorted member ids per cluster, clusters sorted.
    pub clusters: Vec<Vec<String>>,
}

struct Person {
    first: String,
    last: String,
}

/// `n_records` records of which `n_groups` are multi-record duplicate
/// groups (2 to 4 members). Every copy shares at least three linkage fields
/// with the group's original, up to case, punctuation and author-name order;
/// its remaining fields are nulled or replaced with fresh values.
/// Records in different groups never share more than the year.
pub fn planted_duplicates(n_records: usize, n_groups: usize, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![2usize; n_groups];
    let mut budget = n_records.saturating_sub(2 * n_groups);
    for s in sizes.iter_mut() {
        let extra = rng.gen_range(0..=2).min(budget);
        *s += extra;
        budget -= extra;
    }
    let singletons = n_records.saturating_sub(sizes.iter().sum());
    sizes.extend(std::iter::repeat_n(1, singletons));

    let sources = [Source::Wos, Source::Dimensions, Source::Mag, Source::Arxiv, Source::Other];
    let mut ids: Vec<usize> = (0..sizes.iter().sum()).collect();
    ids.shuffle(&mut rng);
    let mut next_id = ids.into_iter();
    let mut records = Vec::with_capacity(n_records);
    let mut clusters = Vec::with_capacity(sizes.len());

    for size in sizes {
        let authors: Vec<Person> = (0..rng.gen_range(1..=4))
            .map(|_| Person {
                first: capitalize(&word(&mut rng)),
                last: capitalize(&word(&mut rng)),
            })
            .collect();
        let title = sentence(&mut rng, 5, 10);
        let abstract_text = sentence(&mut rng, 20, 40);
        let year = rng.gen_range(2000..2020);
        let doi = rng
            .gen_bool(0.7)
            .then(|| format!("10.{}/{}", rng.gen_range(1000..9999), word(&mut rng)));
        let citations = rng
            .gen_bool(0.5)
            .then(|| (0..rng.gen_range(1..6)).map(|_| format!("c{}", rng.gen::<u64>())).collect());

        let mut members = Vec::with_capacity(size);
        let base_source = *sources[..3].choose(&mut rng).expect("non-empty");
        for copy in 0..size {
            let source = if copy == 0 { base_source } else { *sources.choose(&mut rng).expect("non-empty") };
            let id = format!("{}-{:07}", source.as_str(), next_id.next().expect("enough ids"));
            let mut r = PublicationRecord::new(id.clone(), source);
            // Original keeps everything; copies keep at least three of the
            // source-independent fields the original actually has.
            let mut keep = [true; 5];
            if copy > 0 {
                let mut order: Vec<usize> = if doi.is_some() { vec![0, 1, 2, 3, 4] } else { vec![0, 1, 2, 3] };
                let n_keep = rng.gen_range(3..=order.len());
                order.shuffle(&mut rng);
                for &f in &order[n_keep..] {
                    keep[f] = false;
                }
            }
            let variant = copy > 0 && rng.gen_bool(0.5);
            r.title = Some(match (keep[0], variant) {
                (true, false) => title.clone(),
                (true, true) => format!("{}.", title.to_uppercase()),
                (false, _) => sentence(&mut rng, 5, 10),
            });
            r.abstract_text = match keep[1] {
                true if variant => Some(format!("{}.", capitalize(&abstract_text))),
                true => Some(abstract_text.clone()),
                false if rng.gen_bool(0.5) => None,
                false => Some(sentence(&mut rng, 20, 40)),
            };
            r.year = match keep[2] {
                true => Some(year),
                false if rng.gen_bool(0.5) => None,
                false => Some(year + 1),
            };
            r.authors = match keep[3] {
                true if variant => authors.iter().rev().map(|p| format!("{} {}", p.first, p.last)).collect(),
                true => authors.iter().map(|p| format!("{}, {}", p.last, p.first)).collect(),
                false if rng.gen_bool(0.5) => Vec::new(),
                false => vec![format!("{}, A.", capitalize(&word(&mut rng)))],
            };
            r.doi = match (keep[4], &doi) {
                (true, Some(d)) if variant => Some(d.to_uppercase()),
                (true, Some(d)) => Some(d.clone()),
                _ => None,
            };
            if source == base_source {
                r.citation_ids.clone_from(&citations);
            }
            members.push(id);
            records.push(r);
        }
        members.sort();
        clusters.push(members);
    }
    records.shuffle(&mut rng);
    clusters.sort();
    PlantedCorpus { records, clusters }
}

/// Lexicon-feature-shaped rows where a few columns separate the classes
/// with a margin and the rest are noise. `positive_fraction` of the rows
/// are positive.
pub fn separable_features(n: usize, dim: usize, positive_fraction: f64, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = (n as f64 * positive_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng);
    let informative: Vec<usize> = (0..dim).step_by(5).collect();
    let mut data = Dataset::new(dim);
    let mut row = vec![0.0; dim];
    for &label in &labels {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if informative.contains(&j) {
                if label {
                    rng.gen_range(3.0..8.0)
                } else {
                    rng.gen_range(0.0..2.0)
                }
            } else {
                rng.gen_range(0.0..5.0)
            };
        }
        data.push(&row, label).expect("fixed dim");
    }
    data
}

/// Embeddings labeled by a random hyperplane through the origin, with
/// points closer than `margin` to it rejected. Ids are `e{i}`.
pub fn separable_embeddings(
    n: usize,
    dim: usize,
    margin: f64,
    seed: u64,
) -> (EmbeddingTable<f64>, BTreeMap<String, bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut table = EmbeddingTable::new(dim);
    let mut labels = BTreeMap::new();
    let mut x = vec![0.0; dim];
    let mut i = 0;
    while i < n {
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let side = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
        if side.abs() < margin {
            continue;
        }
        let id = format!("e{i}");
        table.insert(id.clone(), &x).expect("fixed dim");
        labels.insert(id, side > 0.0);
        i += 1;
    }
    (table, labels)
}

/// Subject codes used by [`random_labeled_corpus`]: the six relevant
/// defaults plus a handful of others.
pub const SUBJECT_POOL: &[&str] = &[
    "cs.AI", "cs.LG", "cs.CV", "cs.CL", "cs.RO", "cs.MA", "stat.ML", "math.OC", "cs.DB", "q-bio.NC", "physics.optics",
    "cs.CR",
];

/// Labeled records with 1-3 subjects, years in `years`, random text.
pub fn random_labeled_corpus(n: usize, years: std::ops::Range<i32>, seed: u64) -> Vec<PublicationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = PublicationRecord::new(format!("{}.{:05}", 1000 + i / 100_000, i % 100_000), Source::Arxiv);
            r.title = Some(sentence(&mut rng, 4, 9));
            r.abstract_text = Some(sentence(&mut rng, 15, 30));
            r.year = Some(rng.gen_range(years.clone()));
            let k = rng.gen_range(1..=3);
            r.subjects = SUBJECT_POOL.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();
            r
        })
        .collect()
}

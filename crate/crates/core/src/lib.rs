//! Field delineation over publication metadata.
//!
//! Records from arXiv and the bibliometric sources are normalized into
//! [`PublicationRecord`]s, split into stratified train/dev/test partitions,
//! and classified as relevant or not by one of three methods: wildcard
//! keyword matching, a random forest over lexicon features, or a logistic
//! head over frozen text embeddings. [`eval`] scores predictions per year
//! and [`linkage`] merges duplicates across sources.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix it to `f64`, which is what the command-line tool uses.

pub mod eval;
pub mod features;
pub mod ingest;
pub mod keyword;
pub mod learners;
pub mod linkage;
pub mod model_io;
pub mod records;
pub mod scalar;
pub mod synth;

pub use keyword::{classify_by_keywords, compile_pattern, match_pattern, KeywordLexicon, TermPattern};
pub use records::{normalize_text, NormalizedText, PublicationRecord, Source, SubjectConfig};
pub use scalar::Scalar;

pub type Dataset = learners::Dataset<f64>;
pub type ForestModel = learners::ForestModel<f64>;
pub type ForestParams = learners::ForestParams<f64>;
pub type LinearModel = learners::LinearModel<f64>;
pub type LinearParams = learners::LinearParams<f64>;
pub type FeatureVector = features::FeatureVector<f64>;
pub type EmbeddingTable = ingest::EmbeddingTable<f64>;
pub type EvalReport = eval::EvalReport<f64>;
pub type Crosstab = eval::Crosstab<f64>;
pub type ModelFile = model_io::ModelFile<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type Dataset = crate::learners::Dataset<f32>;
    pub type ForestModel = crate::learners::ForestModel<f32>;
    pub type LinearModel = crate::learners::LinearModel<f32>;
    pub type FeatureVector = crate::features::FeatureVector<f32>;
    pub type EmbeddingTable = crate::ingest::EmbeddingTable<f32>;
    pub type EvalReport = crate::eval::EvalReport<f32>;
}

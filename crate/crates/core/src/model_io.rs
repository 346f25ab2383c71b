//! Versioned, self-describing model files.
//!
//! Every artifact is one JSON object carrying `format`, `version` and `kind`,
//! plus whatever the method needs at prediction time: the term list for the
//! keyword classifier, the scored lexicon for the forest, and the embedding
//! convention for the linear head. Floats are written with round-trip
//! precision, so a reloaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, ScoredLexicon};
use crate::ingest::EmbeddingManifest;
use crate::keyword::{KeywordError, KeywordLexicon};
use crate::learners::{ForestModel, LearnError, LinearModel};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "delineate-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (format = {0:?})")]
    Format(String),
    #[error("unsupported model version {0} (this build reads {MODEL_VERSION})")]
    Version(u32),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid model: {0}")]
    Learn(#[from] LearnError),
    #[error("invalid model lexicon: {0}")]
    Feature(#[from] FeatureError),
    #[error("invalid model terms: {0}")]
    Keyword(#[from] KeywordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub enum ModelArtifact<F> {
    Keywords {
        terms: Vec<String>,
    },
    LexiconForest {
        /// Scored lexicon in its TSV form.
        lexicon: String,
        model: ForestModel<F>,
    },
    EmbeddingLinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embedding: Option<EmbeddingManifest>,
        model: LinearModel<F>,
    },
}

impl<F> ModelArtifact<F> {
    pub fn method(&self) -> &'static str {
        match self {
            ModelArtifact::Keywords { .. } => "keywords",
            ModelArtifact::LexiconForest { .. } => "lexicon_forest",
            ModelArtifact::EmbeddingLinear { .. } => "embedding_linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct ModelFile<F> {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub artifact: ModelArtifact<F>,
}

/// A model ready to score records.
pub enum LoadedModel<F> {
    Keywords(KeywordLexicon),
    LexiconForest {
        lexicon: ScoredLexicon,
        model: ForestModel<F>,
    },
    EmbeddingLinear {
        embedding: Option<EmbeddingManifest>,
        model: LinearModel<F>,
    },
}

impl<F: Scalar> ModelFile<F> {
    pub fn new(artifact: ModelArtifact<F>) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            artifact,
        }
    }

    pub fn keywords(lexicon: &KeywordLexicon) -> Self {
        Self::new(ModelArtifact::Keywords {
            terms: lexicon.patterns().iter().map(|p| p.term().to_string()).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        // Check the envelope before the payload so old or foreign files get a
        // clear message rather than a field-level parse error.
        #[derive(Deserialize)]
        struct Envelope {
            format: Option<String>,
            version: Option<u32>,
        }
        let env: Envelope = serde_json::from_str(text)?;
        if env.format.as_deref() != Some(MODEL_FORMAT) {
            return Err(ModelError::Format(env.format.unwrap_or_default()));
        }
        match env.version {
            Some(MODEL_VERSION) => {}
            other => return Err(ModelError::Version(other.unwrap_or(0))),
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Validate and rebuild runtime structures.
    pub fn into_loaded(self) -> Result<LoadedModel<F>, ModelError> {
        Ok(match self.artifact {
            ModelArtifact::Keywords { terms } => LoadedModel::Keywords(KeywordLexicon::from_terms(&terms)?),
            ModelArtifact::LexiconForest { lexicon, model } => {
                model.validate()?;
                LoadedModel::LexiconForest {
                    lexicon: ScoredLexicon::parse(&lexicon)?,
                    model,
                }
            }
            ModelArtifact::EmbeddingLinear { embedding, model } => {
                model.validate()?;
                LoadedModel::EmbeddingLinear { embedding, model }
            }
        })
    }
}

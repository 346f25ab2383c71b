//! Exit-code classification. Every failure carries a stable name printed
//! on stderr as `error[Name]: message`.

use std::fmt;
use std::path::Path;

use delineate_core::eval::EvalError;
use delineate_core::features::FeatureError;
use delineate_core::ingest::IngestError;
use delineate_core::keyword::KeywordError;
use delineate_core::learners::LearnError;
use delineate_core::linkage::LinkageError;
use delineate_core::model_io::ModelError;
use delineate_core::records::RecordError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub name: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.name, self.message)
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn input(name: &'static str, message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, name, message: message.into() }
    }

    pub fn data(name: &'static str, message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, name, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        let name = match err.kind() {
            std::io::ErrorKind::NotFound => "InputNotFound",
            _ => "Io",
        };
        Self::input(name, format!("{}: {err}", path.display()))
    }

    /// Prefix the message with the file it concerns.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let name = match &e {
            IngestError::Parse { .. } => "Parse",
            IngestError::DuplicateId { .. } => "DuplicateId",
            IngestError::DimensionMismatch { .. } => "DimensionMismatch",
            IngestError::NonFiniteValue { .. } => "NonFiniteValue",
            IngestError::Io(_) => return Failure::input("Io", e.to_string()),
        };
        Failure::data(name, e.to_string())
    }
}

impl From<RecordError> for Failure {
    fn from(e: RecordError) -> Self {
        match &e {
            RecordError::MissingSubjects { .. } => Failure::data("MissingSubjects", e.to_string()),
            RecordError::UnknownSource(_) => Failure::input("UnknownSource", e.to_string()),
            RecordError::Config(_) => Failure::input("Config", e.to_string()),
            RecordError::Io(_) => Failure::input("Io", e.to_string()),
        }
    }
}

impl From<KeywordError> for Failure {
    fn from(e: KeywordError) -> Self {
        match &e {
            KeywordError::EmptyTerm(_) => Failure::input("EmptyTerm", e.to_string()),
            KeywordError::Lexicon { .. } => Failure::input("Lexicon", e.to_string()),
            KeywordError::NoText { .. } => Failure::data("NoText", e.to_string()),
            KeywordError::Io(_) => Failure::input("Io", e.to_string()),
        }
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Keyword(k) => k.into(),
            FeatureError::Io(_) => Failure::input("Io", e.to_string()),
            other => Failure::input("Lexicon", other.to_string()),
        }
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        let name = match &e {
            LearnError::EmptyData => "EmptyData",
            LearnError::SingleClass => "SingleClass",
            LearnError::DimensionMismatch { .. } => "DimensionMismatch",
            LearnError::MissingEmbedding(_) => "MissingEmbedding",
            LearnError::InvalidHyperparameter(_) => return Failure::input("InvalidHyperparameter", e.to_string()),
            LearnError::InvalidGrid(_) => return Failure::input("InvalidGrid", e.to_string()),
            LearnError::NoViableCell(_) => "NoViableCell",
        };
        Failure::data(name, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let name = match &e {
            EvalError::MissingYear { .. } => "MissingYear",
            EvalError::MissingSubjects { .. } => "MissingSubjects",
            EvalError::KeyMismatch { .. } => "KeyMismatch",
            EvalError::SplitFormat { .. } => "SplitFormat",
            EvalError::InvalidFractions { .. } => return Failure::input("InvalidFractions", e.to_string()),
            EvalError::Io(_) => return Failure::input("Io", e.to_string()),
        };
        Failure::data(name, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) => Failure::input("Io", e.to_string()),
            ModelError::Learn(l) => l.into(),
            other => Failure::input("ModelFormat", other.to_string()),
        }
    }
}

impl From<LinkageError> for Failure {
    fn from(e: LinkageError) -> Self {
        match &e {
            LinkageError::Io(_) => Failure::input("Spill", e.to_string()),
            LinkageError::TooManyRecords(_) => Failure::data("TooManyRecords", e.to_string()),
        }
    }
}

use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage names used to tag propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SourceFeedback,
    TargetFeedback,
    Embeddings,
    Projection,
    TranslationModel,
    QueryTranslation,
    Feedback,
    FinalRetrieval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::SourceFeedback => "source-feedback",
            Stage::TargetFeedback => "target-feedback",
            Stage::Embeddings => "embeddings",
            Stage::Projection => "projection",
            Stage::TranslationModel => "translation-model",
            Stage::QueryTranslation => "query-translation",
            Stage::Feedback => "feedback",
            Stage::FinalRetrieval => "final-retrieval",
        };
        f.write_str(name)
    }
}

/// Why pair extraction found nothing to train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoPairsReason {
    EmptyDictionary,
    NoVocabularyOverlap,
}

impl fmt::Display for NoPairsReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoPairsReason::EmptyDictionary => f.write_str("empty dictionary"),
            NoPairsReason::NoVocabularyOverlap => {
                f.write_str("no vocabulary overlap with dictionary")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed record at byte {offset} (after {parsed} documents): {message}")]
    MalformedRecord {
        offset: u64,
        parsed: usize,
        message: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown document id {0:?}")]
    UnknownDoc(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("feedback documents contain no terms")]
    EmptyFeedback,

    #[error("vocabulary is empty after min_count filtering")]
    EmptyVocabulary,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no translation pairs: {0}")]
    NoPairs(NoPairsReason),

    #[error("projection diverged at epoch {epoch} (objective {objective}); try a smaller eta")]
    Diverged { epoch: usize, objective: f64 },

    #[error("every query term was dropped during translation")]
    AllTermsDropped,

    #[error("invalid run file: {0}")]
    InvalidRun(String),

    #[error("invalid synthetic corpus config: {0}")]
    InvalidSynthConfig(String),

    #[error("invalid index file: {0}")]
    InvalidIndex(String),

    #[error("stage {stage} failed for topic {topic}: {source}")]
    Stage {
        stage: Stage,
        topic: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: Stage, topic: &str) -> Self {
        Error::Stage {
            stage,
            topic: topic.to_string(),
            source: Box::new(self),
        }
    }
}

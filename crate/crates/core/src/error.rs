use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus files are not aligned: {source_lines} source lines vs {target_lines} target lines")]
    Alignment {
        source_lines: usize,
        target_lines: usize,
    },

    #[error("malformed corpus {path} at line {line}: {reason}")]
    MalformedCorpus {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sentence is already tagged as synthetic: {0}")]
    DoubleTag(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("training diverged: non-finite loss at step {step}")]
    Divergence { step: u64 },

    #[error("synthetic generation skipped {skipped} of {total} sentences (limit 1%)")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("{stage} failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }
}

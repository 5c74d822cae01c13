//! Data model and file formats: trial records, patient topics, graded
//! judgments and TREC run files.

mod qrels;
mod run;
mod topics;
mod trial;
mod xml;

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

pub use qrels::{load_qrels, parse_qrels, Grade, Qrels};
pub use run::{format_run, parse_run, read_run, validate_run, write_run, RunEntry};
pub use topics::{load_topics, parse_topics, PatientTopic, TopicFormat};
pub use trial::{load_corpus, parse_trial_document, parse_trials_jsonl, ClinicalTrialDoc};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("missing required element {path}")]
    MissingField { path: String },
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: grade {grade} outside {{0,1,2}}")]
    InvalidGrade { line: usize, grade: i64 },
    #[error("duplicate judgment for topic {topic}, doc {docno}")]
    DuplicateJudgment { topic: String, docno: String },
    #[error("duplicate topic ids: {}", .0.join(", "))]
    DuplicateTopics(Vec<String>),
    #[error("topic {0} has an empty note")]
    EmptyNote(String),
    #[error("duplicate docno {0}")]
    DuplicateDocno(String),
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (CorpusError::Io { .. } | CorpusError::InFile { .. }) => e,
            e => CorpusError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any file context stripped.
    pub fn root(&self) -> &CorpusError {
        match self {
            CorpusError::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Topic ids compare numerically when both are integers, else as strings.
pub fn topic_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

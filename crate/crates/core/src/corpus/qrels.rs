use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Three-level clinical-trials judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Grade {
    NotRelevant = 0,
    Excludes = 1,
    Eligible = 2,
}

impl Grade {
    pub fn value(self) -> u8 {
        self as u8
    }
}

impl TryFrom<i64> for Grade {
    type Error = i64;

    fn try_from(v: i64) -> Result<Self, i64> {
        match v {
            0 => Ok(Grade::NotRelevant),
            1 => Ok(Grade::Excludes),
            2 => Ok(Grade::Eligible),
            other => Err(other),
        }
    }
}

impl TryFrom<u8> for Grade {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        Grade::try_from(v as i64).map_err(|g| format!("grade {g} outside {{0,1,2}}"))
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g as u8
    }
}

/// Graded judgments keyed by topic, then docno.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_topic: BTreeMap<String, BTreeMap<String, Grade>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a judgment; a second judgment for the same pair is rejected.
    pub fn insert(&mut self, topic: &str, docno: &str, grade: Grade) -> Result<(), CorpusError> {
        let docs = self.by_topic.entry(topic.to_string()).or_default();
        if docs.contains_key(docno) {
            return Err(CorpusError::DuplicateJudgment {
                topic: topic.to_string(),
                docno: docno.to_string(),
            });
        }
        docs.insert(docno.to_string(), grade);
        Ok(())
    }

    pub fn grade(&self, topic: &str, docno: &str) -> Option<Grade> {
        self.by_topic.get(topic)?.get(docno).copied()
    }

    pub fn judgments(&self, topic: &str) -> Option<&BTreeMap<String, Grade>> {
        self.by_topic.get(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.by_topic.keys().map(String::as_str)
    }

    pub fn contains_topic(&self, topic: &str) -> bool {
        self.by_topic.contains_key(topic)
    }

    pub fn len(&self) -> usize {
        self.by_topic.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of judgments with exactly this grade for a topic.
    pub fn count(&self, topic: &str, grade: Grade) -> usize {
        self.judgments(topic)
            .map_or(0, |j| j.values().filter(|g| **g == grade).count())
    }
}

/// Parse `topic iteration docno grade` lines.
pub fn parse_qrels(text: &str) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(CorpusError::Line {
                line: lineno,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let raw: i64 = cols[3].parse().map_err(|_| CorpusError::Line {
            line: lineno,
            message: format!("grade {:?} is not an integer", cols[3]),
        })?;
        let grade = Grade::try_from(raw).map_err(|g| CorpusError::InvalidGrade {
            line: lineno,
            grade: g,
        })?;
        qrels.insert(cols[0], cols[2], grade).map_err(|e| match e {
            CorpusError::DuplicateJudgment { topic, docno } => CorpusError::Line {
                line: lineno,
                message: format!("duplicate judgment for ({topic}, {docno})"),
            },
            other => other,
        })?;
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_qrels(&text).map_err(|e| e.in_file(path))
}

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::xml::parse_document;
use super::CorpusError;

/// A patient case: topic id plus the unstructured note used as the query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientTopic {
    pub topic_id: String,
    pub note_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicFormat {
    /// `<topics><topic number="1">note</topic>...</topics>`
    TrecXml,
    /// `{"id": ..., "text": ...}` per line
    Jsonl,
    /// `id<TAB>text` per line
    Tsv,
}

impl TopicFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xml" => Some(TopicFormat::TrecXml),
            "jsonl" | "json" => Some(TopicFormat::Jsonl),
            "tsv" | "txt" => Some(TopicFormat::Tsv),
            _ => None,
        }
    }
}

impl FromStr for TopicFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trec_xml" | "xml" => Ok(TopicFormat::TrecXml),
            "jsonl" => Ok(TopicFormat::Jsonl),
            "tsv" => Ok(TopicFormat::Tsv),
            other => Err(format!("unknown topic format {other:?}")),
        }
    }
}

pub fn parse_topics(text: &str, format: TopicFormat) -> Result<Vec<PatientTopic>, CorpusError> {
    let topics = match format {
        TopicFormat::TrecXml => parse_trec_xml(text)?,
        TopicFormat::Jsonl => parse_jsonl(text)?,
        TopicFormat::Tsv => parse_tsv(text)?,
    };
    validate(&topics)?;
    Ok(topics)
}

pub fn load_topics(path: &Path, format: TopicFormat) -> Result<Vec<PatientTopic>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_topics(&text, format).map_err(|e| e.in_file(path))
}

fn parse_trec_xml(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let root = parse_document(text.as_bytes())?;
    root.children_named("topic")
        .enumerate()
        .map(|(i, t)| {
            let id = t
                .attr("number")
                .map(str::to_string)
                .or_else(|| t.child("num").map(|n| n.text_content()))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CorpusError::MissingField {
                    path: format!("topics/topic[{}]/@number", i + 1),
                })?;
            Ok(PatientTopic {
                topic_id: id,
                note_text: t.text_content().trim().to_string(),
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct JsonTopic {
    id: serde_json::Value,
    text: String,
}

fn parse_jsonl(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: JsonTopic = serde_json::from_str(line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        let topic_id = match t.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(CorpusError::Json {
                    line: i + 1,
                    message: format!("topic id must be a string or number, got {other}"),
                })
            }
        };
        out.push(PatientTopic {
            topic_id,
            note_text: t.text.trim().to_string(),
        });
    }
    Ok(out)
}

fn parse_tsv(text: &str) -> Result<Vec<PatientTopic>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, note) = line.split_once('\t').ok_or_else(|| CorpusError::Line {
            line: i + 1,
            message: "expected `id<TAB>text`".into(),
        })?;
        out.push(PatientTopic {
            topic_id: id.trim().to_string(),
            note_text: note.trim().to_string(),
        });
    }
    Ok(out)
}

fn validate(topics: &[PatientTopic]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = Vec::new();
    for t in topics {
        if !seen.insert(t.topic_id.as_str()) && !dups.contains(&t.topic_id) {
            dups.push(t.topic_id.clone());
        }
    }
    if !dups.is_empty() {
        return Err(CorpusError::DuplicateTopics(dups));
    }
    if let Some(t) = topics.iter().find(|t| t.note_text.is_empty()) {
        return Err(CorpusError::EmptyNote(t.topic_id.clone()));
    }
    Ok(())
}

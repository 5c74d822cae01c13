//! TREC run files: `topic Q0 docno rank score tag`, one space apart,
//! scores with six decimals.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub topic_id: String,
    pub docno: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

fn bad(msg: String) -> CorpusError {
    CorpusError::InvalidRun(msg)
}

fn check_field(what: &str, value: &str) -> Result<(), CorpusError> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(bad(format!("{what} {value:?} must be non-empty without whitespace")));
    }
    Ok(())
}

/// Per topic (in order of appearance): ranks run 1..n, scores never
/// increase, docnos are unique.
pub fn validate_run(entries: &[RunEntry]) -> Result<(), CorpusError> {
    struct TopicState<'a> {
        next_rank: u32,
        last_score: f64,
        docs: HashSet<&'a str>,
    }
    let mut topics: HashMap<&str, TopicState> = HashMap::new();
    for e in entries {
        check_field("topic", &e.topic_id)?;
        check_field("docno", &e.docno)?;
        check_field("tag", &e.tag)?;
        if !e.score.is_finite() {
            return Err(bad(format!("topic {}: non-finite score for {}", e.topic_id, e.docno)));
        }
        let st = topics.entry(&e.topic_id).or_insert(TopicState {
            next_rank: 1,
            last_score: f64::INFINITY,
            docs: HashSet::new(),
        });
        if e.rank != st.next_rank {
            return Err(bad(format!(
                "topic {}: expected rank {}, found {}",
                e.topic_id, st.next_rank, e.rank
            )));
        }
        if e.score > st.last_score {
            return Err(bad(format!(
                "topic {}: score increases at rank {}",
                e.topic_id, e.rank
            )));
        }
        if !st.docs.insert(&e.docno) {
            return Err(bad(format!("topic {}: duplicate docno {}", e.topic_id, e.docno)));
        }
        st.next_rank += 1;
        st.last_score = e.score;
    }
    Ok(())
}

pub fn format_run(entries: &[RunEntry]) -> Result<String, CorpusError> {
    validate_run(entries)?;
    let mut out = String::with_capacity(entries.len() * 48);
    for e in entries {
        writeln!(
            out,
            "{} Q0 {} {} {:.6} {}",
            e.topic_id, e.docno, e.rank, e.score, e.tag
        )
        .expect("write to String");
    }
    Ok(out)
}

/// Validate, then write. Nothing is written if validation fails.
pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<(), CorpusError> {
    let text = format_run(entries)?;
    std::fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

pub fn parse_run(text: &str) -> Result<Vec<RunEntry>, CorpusError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let line_err = |message: String| CorpusError::Line {
            line: i + 1,
            message,
        };
        if cols.len() != 6 {
            return Err(line_err(format!("expected 6 columns, found {}", cols.len())));
        }
        entries.push(RunEntry {
            topic_id: cols[0].to_string(),
            docno: cols[2].to_string(),
            rank: cols[3]
                .parse()
                .map_err(|_| line_err(format!("bad rank {:?}", cols[3])))?,
            score: cols[4]
                .parse()
                .map_err(|_| line_err(format!("bad score {:?}", cols[4])))?,
            tag: cols[5].to_string(),
        });
    }
    validate_run(&entries)?;
    Ok(entries)
}

pub fn read_run(path: &Path) -> Result<Vec<RunEntry>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_run(&text).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(t: &str, d: &str, rank: u32, score: f64) -> RunEntry {
        RunEntry {
            topic_id: t.into(),
            docno: d.into(),
            rank,
            score,
            tag: "bm25".into(),
        }
    }

    #[test]
    fn exact_line_format() {
        let s = format_run(&[entry("1", "NCT001", 1, 2.5)]).unwrap();
        assert_eq!(s, "1 Q0 NCT001 1 2.500000 bm25\n");
    }

    #[test]
    fn rejects_invalid_runs() {
        let non_monotone = [entry("1", "a", 1, 1.0), entry("1", "b", 2, 2.0)];
        assert!(format_run(&non_monotone).is_err());
        let gap = [entry("1", "a", 1, 2.0), entry("1", "b", 3, 1.0)];
        assert!(format_run(&gap).is_err());
        let dup = [entry("1", "a", 1, 2.0), entry("1", "a", 2, 1.0)];
        assert!(format_run(&dup).is_err());
        let nan = [entry("1", "a", 1, f64::NAN)];
        assert!(format_run(&nan).is_err());
        let spacey = [entry("1", "a b", 1, 1.0)];
        assert!(format_run(&spacey).is_err());
    }

    #[test]
    fn topics_are_independent() {
        let ok = [
            entry("1", "a", 1, 2.0),
            entry("2", "a", 1, 9.0),
            entry("1", "b", 2, 1.0),
            entry("2", "b", 2, -3.0),
        ];
        assert!(validate_run(&ok).is_ok());
    }

    #[test]
    fn no_file_written_on_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        let gap = [entry("1", "a", 2, 2.0)];
        assert!(write_run(&gap, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn parse_reports_line_numbers() {
        assert!(matches!(
            parse_run("1 Q0 a 1 1.0 t\n1 Q0 b two 0.5 t\n"),
            Err(CorpusError::Line { line: 2, .. })
        ));
        assert!(matches!(
            parse_run("1 Q0 a 1 1.0\n"),
            Err(CorpusError::Line { line: 1, .. })
        ));
    }
}

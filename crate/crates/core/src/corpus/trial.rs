use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::xml::{normalize_ws, parse_document, Element};
use super::CorpusError;

/// One registry entry. Absent sections are empty strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalTrialDoc {
    pub docno: String,
    pub title: String,
    pub conditions: Vec<String>,
    pub brief_summary: String,
    pub detailed_description: String,
    pub eligibility_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_age: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age: Option<String>,
}

impl ClinicalTrialDoc {
    /// The text that gets indexed: title, conditions, summary, description
    /// and eligibility, in that order.
    pub fn indexable_text(&self) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(4 + self.conditions.len());
        parts.push(&self.title);
        parts.extend(self.conditions.iter().map(String::as_str));
        parts.push(&self.brief_summary);
        parts.push(&self.detailed_description);
        parts.push(&self.eligibility_text);
        parts.join("\n")
    }
}

const DOCNO_PATH: &str = "clinical_study/id_info/nct_id";

fn field(root: &Element, path: &str) -> String {
    root.at(path)
        .map(|e| normalize_ws(&e.text_content()))
        .unwrap_or_default()
}

fn optional_field(root: &Element, path: &str) -> Option<String> {
    root.at(path)
        .map(|e| normalize_ws(&e.text_content()))
        .filter(|s| !s.is_empty())
}

/// Parse one ClinicalTrials.gov record in the legacy `<clinical_study>`
/// schema.
pub fn parse_trial_document(xml: &[u8]) -> Result<ClinicalTrialDoc, CorpusError> {
    let root = parse_document(xml)?;
    if root.name != "clinical_study" {
        return Err(CorpusError::MissingField {
            path: "clinical_study".into(),
        });
    }
    let docno = field(&root, "id_info/nct_id");
    if docno.is_empty() {
        return Err(CorpusError::MissingField {
            path: DOCNO_PATH.into(),
        });
    }
    let mut title = field(&root, "brief_title");
    if title.is_empty() {
        title = field(&root, "official_title");
    }
    Ok(ClinicalTrialDoc {
        docno,
        title,
        conditions: root
            .children_named("condition")
            .map(|c| normalize_ws(&c.text_content()))
            .filter(|c| !c.is_empty())
            .collect(),
        brief_summary: field(&root, "brief_summary/textblock"),
        detailed_description: field(&root, "detailed_description/textblock"),
        eligibility_text: field(&root, "eligibility/criteria/textblock"),
        gender: optional_field(&root, "eligibility/gender"),
        min_age: optional_field(&root, "eligibility/minimum_age"),
        max_age: optional_field(&root, "eligibility/maximum_age"),
    })
}

#[derive(Deserialize)]
struct FlatRecord {
    docno: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    conditions: Vec<String>,
    #[serde(default, alias = "brief_summary")]
    summary: String,
    #[serde(default, alias = "detailed_description")]
    description: String,
    #[serde(default, alias = "eligibility_text")]
    eligibility: String,
    #[serde(default)]
    gender: Option<String>,
    #[serde(default)]
    min_age: Option<String>,
    #[serde(default)]
    max_age: Option<String>,
}

/// Parse the flat JSONL corpus format, one record per line with keys
/// `docno, title, conditions, summary, description, eligibility`. Serialized
/// [`ClinicalTrialDoc`]s are accepted too.
pub fn parse_trials_jsonl(text: &str) -> Result<Vec<ClinicalTrialDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FlatRecord = serde_json::from_str(line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.docno.trim().is_empty() {
            return Err(CorpusError::MissingField {
                path: format!("line {}: docno", i + 1),
            });
        }
        docs.push(ClinicalTrialDoc {
            docno: rec.docno.trim().to_string(),
            title: normalize_ws(&rec.title),
            conditions: rec.conditions.iter().map(|c| normalize_ws(c)).collect(),
            brief_summary: normalize_ws(&rec.summary),
            detailed_description: normalize_ws(&rec.description),
            eligibility_text: normalize_ws(&rec.eligibility),
            gender: rec.gender,
            min_age: rec.min_age,
            max_age: rec.max_age,
        });
    }
    Ok(docs)
}

fn xml_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("xml"))
        {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Load a corpus from a directory tree of XML records, a single XML record
/// or a JSONL file. Docnos must be unique.
pub fn load_corpus(path: &Path) -> Result<Vec<ClinicalTrialDoc>, CorpusError> {
    let docs = if path.is_dir() {
        xml_files(path)?
            .par_iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| CorpusError::io(p, e))?;
                parse_trial_document(&bytes).map_err(|e| e.in_file(p))
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")) {
            vec![parse_trial_document(&bytes).map_err(|e| e.in_file(path))?]
        } else {
            let text = String::from_utf8(bytes).map_err(|e| CorpusError::Json {
                line: 0,
                message: e.to_string(),
            })?;
            parse_trials_jsonl(&text).map_err(|e| e.in_file(path))?
        }
    };
    let mut seen = HashSet::with_capacity(docs.len());
    for d in &docs {
        if !seen.insert(d.docno.as_str()) {
            return Err(CorpusError::DuplicateDocno(d.docno.clone()));
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<clinical_study rank="1">
  <id_info><nct_id>NCT00000102</nct_id></id_info>
  <brief_title>T</brief_title>
  <condition>Asthma</condition>
  <brief_summary>
    <textblock>
      Short   summary
      over lines.
    </textblock>
  </brief_summary>
  <eligibility>
    <criteria><textblock>Inclusion: age &gt; 18</textblock></criteria>
    <gender>All</gender>
    <minimum_age>18 Years</minimum_age>
    <maximum_age>N/A</maximum_age>
  </eligibility>
</clinical_study>"#;

    #[test]
    fn maps_fields() {
        let d = parse_trial_document(RECORD.as_bytes()).unwrap();
        assert_eq!(d.docno, "NCT00000102");
        assert_eq!(d.title, "T");
        assert_eq!(d.conditions, ["Asthma"]);
        assert_eq!(d.brief_summary, "Short summary over lines.");
        assert_eq!(d.eligibility_text, "Inclusion: age > 18");
        assert_eq!(d.detailed_description, "");
        assert_eq!(d.gender.as_deref(), Some("All"));
        assert_eq!(d.min_age.as_deref(), Some("18 Years"));
    }

    #[test]
    fn missing_docno_names_the_path() {
        let xml = RECORD.replace("<id_info><nct_id>NCT00000102</nct_id></id_info>", "");
        match parse_trial_document(xml.as_bytes()) {
            Err(CorpusError::MissingField { path }) => assert_eq!(path, DOCNO_PATH),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_xml_has_offset() {
        let xml = RECORD.replace("</brief_title>", "</brief_titl>");
        match parse_trial_document(xml.as_bytes()) {
            Err(CorpusError::Xml { offset, .. }) => {
                assert!(offset as usize >= RECORD.find("<brief_title>").unwrap())
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn official_title_fallback() {
        let xml = RECORD.replace("<brief_title>T</brief_title>", "<official_title>Official</official_title>");
        assert_eq!(parse_trial_document(xml.as_bytes()).unwrap().title, "Official");
    }

    #[test]
    fn jsonl_records() {
        let docs = parse_trials_jsonl(
            "{\"docno\":\"NCT1\",\"title\":\"A\",\"conditions\":[\"X\"],\"summary\":\"s\",\"eligibility\":\"e\"}\n\n{\"docno\":\"NCT2\"}\n",
        )
        .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].conditions, ["X"]);
        assert_eq!(docs[1].title, "");
        assert!(matches!(
            parse_trials_jsonl("{\"title\":\"x\"}"),
            Err(CorpusError::Json { line: 1, .. })
        ));
    }

    #[test]
    fn serialized_documents_round_trip_through_jsonl() {
        let d = parse_trial_document(RECORD.as_bytes()).unwrap();
        let line = serde_json::to_string(&d).unwrap();
        assert_eq!(parse_trials_jsonl(&line).unwrap(), [d]);
    }

    #[test]
    fn indexable_text_order() {
        let d = parse_trial_document(RECORD.as_bytes()).unwrap();
        assert_eq!(
            d.indexable_text(),
            "T\nAsthma\nShort summary over lines.\n\nInclusion: age > 18"
        );
    }
}

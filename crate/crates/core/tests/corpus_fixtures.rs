//! Parsing the bundled fixture collection and file-format properties.

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use trialir_core::corpus::{
    format_run, load_corpus, load_qrels, load_topics, parse_run, parse_trial_document, ClinicalTrialDoc, Grade,
    RunEntry, TopicFormat,
};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn registry_record_matches_path_extraction_oracle() {
    let dir = fixtures().join("registry");
    let xml = std::fs::read(dir.join("NCT01234567.xml")).unwrap();
    let want: ClinicalTrialDoc =
        serde_json::from_str(&std::fs::read_to_string(dir.join("NCT01234567.expected.json")).unwrap()).unwrap();
    let got = parse_trial_document(&xml).unwrap();
    assert_eq!(got, want);
    assert!(got.eligibility_text.contains("≥ 12 months"));
    assert!(got.title.contains(" & "));
}

#[test]
fn fixture_corpus_parses_completely() {
    let docs = load_corpus(&fixtures().join("trials")).unwrap();
    assert_eq!(docs.len(), 100);
    for d in &docs {
        assert!(d.docno.starts_with("NCT") && d.docno.len() == 11, "{}", d.docno);
        assert!(!d.title.is_empty());
        assert!(d.eligibility_text.starts_with("Inclusion Criteria:"));
        assert!(!d.eligibility_text.contains("  "));
        assert!(!d.conditions.is_empty());
    }
    let without_description = docs.iter().filter(|d| d.detailed_description.is_empty()).count();
    assert_eq!(without_description, 20);
}

#[test]
fn topic_formats_agree() {
    let xml = load_topics(&fixtures().join("topics.xml"), TopicFormat::TrecXml).unwrap();
    let jsonl = load_topics(&fixtures().join("topics.jsonl"), TopicFormat::Jsonl).unwrap();
    let tsv = load_topics(&fixtures().join("topics.tsv"), TopicFormat::Tsv).unwrap();
    assert_eq!(xml.len(), 10);
    let ids: Vec<_> = xml.iter().map(|t| t.topic_id.as_str()).collect();
    assert_eq!(ids, ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]);
    assert_eq!(xml, jsonl);
    assert_eq!(xml, tsv);
}

#[test]
fn fixture_qrels_counts() {
    let q = load_qrels(&fixtures().join("qrels.txt")).unwrap();
    assert_eq!(q.len(), 110);
    // eligible judgments per topic, read off qrels.txt
    let eligible: BTreeMap<&str, usize> = [
        ("1", 5), ("2", 5), ("3", 5), ("4", 4), ("5", 6),
        ("6", 3), ("7", 5), ("8", 4), ("9", 2), ("10", 8),
    ]
    .into_iter()
    .collect();
    for (t, n) in eligible {
        assert_eq!(q.count(t, Grade::Eligible), n, "topic {t}");
        assert_eq!(q.count(t, Grade::NotRelevant), 3, "topic {t}");
        assert_eq!(q.judgments(t).unwrap().len(), 11);
    }
}

#[test]
fn every_truncated_record_is_ok_or_typed_error() {
    let xml = std::fs::read(fixtures().join("registry/NCT01234567.xml")).unwrap();
    for n in 0..xml.len() {
        // must not panic
        let _ = parse_trial_document(&xml[..n]);
    }
    assert!(parse_trial_document(&xml[..xml.len() / 2]).is_err());
}

fn run_strategy() -> impl Strategy<Value = Vec<RunEntry>> {
    proptest::collection::vec(
        ("[0-9]{1,3}", proptest::collection::vec(0u32..1_000_000, 1..12), "[a-z]{1,6}"),
        1..6,
    )
    .prop_map(|topics| {
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (topic, mut scores, tag) in topics {
            if !seen.insert(topic.clone()) {
                continue;
            }
            scores.sort_unstable_by(|a, b| b.cmp(a));
            for (i, s) in scores.into_iter().enumerate() {
                out.push(RunEntry {
                    topic_id: topic.clone(),
                    docno: format!("NCT{i:08}"),
                    rank: i as u32 + 1,
                    // six-decimal values survive formatting exactly
                    score: s as f64 / 1000.0,
                    tag: tag.clone(),
                });
            }
        }
        out
    })
}

proptest! {
    #[test]
    fn run_round_trip(run in run_strategy()) {
        let text = format_run(&run).unwrap();
        let back = parse_run(&text).unwrap();
        prop_assert_eq!(back, run);
    }

    #[test]
    fn trial_parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_trial_document(&bytes);
    }

    #[test]
    fn mutated_fixture_never_panics(pos in 0usize..2000, byte in any::<u8>()) {
        let mut xml = std::fs::read(fixtures().join("registry/NCT01234567.xml")).unwrap();
        let i = pos % xml.len();
        xml[i] = byte;
        let _ = parse_trial_document(&xml);
    }
}

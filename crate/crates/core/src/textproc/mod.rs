//! Deterministic text pipeline shared by indexing and querying.
//!
//! Every piece of text, whether a trial document, a patient note or an LLM
//! generation, goes through the same `tokenize -> remove_stopwords ->
//! porter_stem` chain. The [`Analyzer`] bundles that chain with the
//! stoplist it uses and exposes a hash identifying the configuration, which
//! the index records so that queries built with a different pipeline can be
//! refused.

mod porter;
mod stoplist;
mod tokenize;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use porter::porter_stem;
pub use stoplist::{remove_stopwords, Stoplist};
pub use tokenize::{tokenize, TokenStream, MAX_TOKEN_CHARS};

/// Bumped whenever tokenization or stemming changes behaviour.
pub const PIPELINE_VERSION: &str = "tokenize-v1/porter-c/maxlen-64";

/// Stemmed, stopword-free query terms, in order, duplicates kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedQuery {
    pub terms: Vec<String>,
    /// [`Analyzer::pipeline_hash`] of the pipeline that produced `terms`.
    pub pipeline_hash: String,
}

impl ProcessedQuery {
    pub fn new(terms: Vec<String>, pipeline_hash: impl Into<String>) -> Self {
        ProcessedQuery {
            terms,
            pipeline_hash: pipeline_hash.into(),
        }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// How a generated query is turned into the final search query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    GeneratedOnly,
    ConcatOriginal,
}

#[derive(Debug, Clone)]
pub struct Analyzer {
    stoplist: Stoplist,
    pipeline_hash: String,
}

impl Default for Analyzer {
    /// The bundled English stoplist.
    fn default() -> Self {
        Analyzer::new(Stoplist::english())
    }
}

impl Analyzer {
    pub fn new(stoplist: Stoplist) -> Self {
        let mut h = Sha256::new();
        h.update(PIPELINE_VERSION.as_bytes());
        h.update(b"\0");
        h.update(stoplist.hash().as_bytes());
        let pipeline_hash = hex::encode(h.finalize());
        Analyzer {
            stoplist,
            pipeline_hash,
        }
    }

    pub fn stoplist(&self) -> &Stoplist {
        &self.stoplist
    }

    /// Hash of pipeline version plus stoplist contents.
    pub fn pipeline_hash(&self) -> &str {
        &self.pipeline_hash
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        remove_stopwords(tokenize(text), &self.stoplist)
            .into_iter()
            .map(|t| porter_stem(&t))
            .collect()
    }

    /// Run plain text (e.g. a patient note) through the pipeline.
    pub fn process(&self, text: &str) -> ProcessedQuery {
        ProcessedQuery::new(self.analyze(text), self.pipeline_hash.clone())
    }

    /// Post-process a verbatim LLM generation into a query: list markers go
    /// first, then the regular pipeline. Every other numeral survives.
    pub fn postprocess_generated(&self, raw: &str) -> ProcessedQuery {
        self.process(&strip_list_markers(raw))
    }

    /// Combine a processed generation with the note it came from.
    pub fn build_query(
        &self,
        strategy: QueryStrategy,
        original_note: &str,
        generated: &ProcessedQuery,
    ) -> ProcessedQuery {
        match strategy {
            QueryStrategy::GeneratedOnly => generated.clone(),
            QueryStrategy::ConcatOriginal => {
                let mut terms = self.analyze(original_note);
                terms.extend(generated.terms.iter().cloned());
                ProcessedQuery::new(terms, self.pipeline_hash.clone())
            }
        }
    }
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // bullet, numbered marker, or bullet followed by a numbered marker
        Regex::new(r"^[ \t]*(?:[-*][ \t]+|[-*]$)?(?:[0-9]+[.)](?:[ \t]+|$))?").unwrap()
    })
}

/// Remove line-initial list markers: `digits` followed by `.` or `)` and
/// whitespace, and `-`/`*` bullets.
pub fn strip_list_markers(raw: &str) -> String {
    raw.lines()
        .map(|line| {
            let cut = list_marker().find(line).map_or(0, |m| m.end());
            &line[cut..]
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Free-function form of [`Analyzer::postprocess_generated`].
pub fn postprocess_generated_query(raw: &str, stoplist: &Stoplist) -> ProcessedQuery {
    Analyzer::new(stoplist.clone()).postprocess_generated(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analyzer() -> Analyzer {
        Analyzer::new(Stoplist::english())
    }

    #[test]
    fn numbered_markers_removed_other_numbers_kept() {
        let q = analyzer().postprocess_generated("1. diabetes mellitus\n2) insulin 10 units");
        assert_eq!(q.terms, ["diabet", "mellitu", "insulin", "10", "unit"]);
        assert!(!q.terms.iter().any(|t| t == "1" || t == "2"));
    }

    #[test]
    fn default_analyzer_is_the_english_pipeline() {
        assert_eq!(Analyzer::default().pipeline_hash(), analyzer().pipeline_hash());
        assert_eq!(Analyzer::default().pipeline_hash().len(), 64);
    }

    #[test]
    fn ages_survive() {
        let q = analyzer().postprocess_generated("52-year-old male");
        assert!(q.terms.contains(&"52".to_string()));
    }

    #[test]
    fn markers_need_whitespace_or_eol() {
        assert_eq!(strip_list_markers("2.5 mg daily"), "2.5 mg daily");
        assert_eq!(strip_list_markers("  12. foo\n3)\n- bar\n* 4. baz"), "foo\n\nbar\nbaz");
        assert_eq!(strip_list_markers("-5 degrees"), "-5 degrees");
    }

    #[test]
    fn empty_generation_is_valid() {
        let q = analyzer().postprocess_generated("");
        assert_eq!(q.term_count(), 0);
        let q = analyzer().postprocess_generated("1.\n2.\nthe of and");
        assert_eq!(q.term_count(), 0);
    }

    #[test]
    fn build_query_strategies() {
        let a = analyzer();
        let gen = a.postprocess_generated("metformin, insulin, dyspnea, copd, smoker");
        assert_eq!(gen.term_count(), 5);
        assert_eq!(a.build_query(QueryStrategy::GeneratedOnly, "whatever", &gen), gen);

        let note = "The cough, wheezing, fever, fatigue, dyspnea, hemoptysis, edema, anemia, hypoxia and tachycardia.";
        let orig = a.process(note);
        assert_eq!(orig.term_count(), 10);
        let concat = a.build_query(QueryStrategy::ConcatOriginal, note, &gen);
        assert_eq!(concat.term_count(), 15);
        assert_eq!(&concat.terms[..10], &orig.terms[..]);
        assert_eq!(&concat.terms[10..], &gen.terms[..]);

        let empty = a.postprocess_generated("");
        assert_eq!(a.build_query(QueryStrategy::ConcatOriginal, note, &empty), orig);
    }

    #[test]
    fn pipeline_hash_tracks_stoplist() {
        assert_eq!(analyzer().pipeline_hash(), analyzer().pipeline_hash());
        assert_ne!(
            analyzer().pipeline_hash(),
            Analyzer::new(Stoplist::empty()).pipeline_hash()
        );
    }
}

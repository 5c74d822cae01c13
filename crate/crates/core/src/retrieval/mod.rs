//! BM25 ranking, RM3 feedback expansion and per-topic runs.

mod rm3;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{topic_order, PatientTopic, RunEntry};
use crate::index::InvertedIndex;
use crate::textproc::{Analyzer, ProcessedQuery, QueryStrategy};

pub use rm3::{feedback_terms, rm3_expand, Rm3Params};

/// Default run depth.
pub const DEFAULT_DEPTH: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("query pipeline {query} does not match index pipeline {index}; rebuild the index or use the stoplist it was built with")]
    PipelineMismatch { query: String, index: String },
    #[error("no generated query for topic {0}")]
    MissingBundle(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::InvalidParams(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Non-negative BM25 IDF: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn idf(n_docs: usize, df: u32) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(params: &Bm25Params, idf: f64, tf: f64, dl: f64, avgdl: f64) -> f64 {
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub docno: String,
    pub score: f64,
}

/// Documents for one topic, by score descending then docno ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub topic_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn to_run_entries(&self, tag: &str) -> Vec<RunEntry> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| RunEntry {
                topic_id: self.topic_id.clone(),
                docno: e.docno.clone(),
                rank: i as u32 + 1,
                score: e.score,
                tag: tag.to_string(),
            })
            .collect()
    }
}

fn check_pipeline(index: &InvertedIndex, query: &ProcessedQuery) -> Result<(), RetrievalError> {
    if query.pipeline_hash != index.stats_hash() {
        return Err(RetrievalError::PipelineMismatch {
            query: query.pipeline_hash.clone(),
            index: index.stats_hash().to_string(),
        });
    }
    Ok(())
}

/// BM25 score of one document. Query terms count with multiplicity.
pub fn bm25_score(
    index: &InvertedIndex,
    params: &Bm25Params,
    query: &ProcessedQuery,
    doc_ordinal: u32,
) -> Result<f64, RetrievalError> {
    check_pipeline(index, query)?;
    let n = index.n_docs();
    let avgdl = index.avgdl();
    let dl = index.doc(doc_ordinal).length as f64;
    let mut score = 0.0;
    for term in &query.terms {
        let tf = index.tf(term, doc_ordinal);
        if tf > 0 {
            let df = index.postings(term).len() as u32;
            score += term_weight(params, idf(n, df), tf as f64, dl, avgdl);
        }
    }
    Ok(score)
}

/// Scores for every document, indexed by ordinal.
pub fn score_all(
    index: &InvertedIndex,
    params: &Bm25Params,
    query: &ProcessedQuery,
) -> Result<Vec<f64>, RetrievalError> {
    check_pipeline(index, query)?;
    let n = index.n_docs();
    let avgdl = index.avgdl();
    let mut acc = vec![0.0f64; n];
    for term in &query.terms {
        let plist = index.postings(term);
        if plist.is_empty() {
            continue;
        }
        let w = idf(n, plist.len() as u32);
        for p in plist {
            let dl = index.doc(p.doc).length as f64;
            acc[p.doc as usize] += term_weight(params, w, p.tf as f64, dl, avgdl);
        }
    }
    Ok(acc)
}

/// Top-k `(ordinal, score)` with score > 0. Ordinals follow docno order, so
/// breaking ties by ordinal is breaking them by docno.
pub fn top_k(
    index: &InvertedIndex,
    params: &Bm25Params,
    query: &ProcessedQuery,
    k: usize,
) -> Result<Vec<(u32, f64)>, RetrievalError> {
    let scores = score_all(index, params, query)?;
    let mut hits: Vec<(u32, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s > 0.0)
        .map(|(i, s)| (i as u32, s))
        .collect();
    let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if hits.len() > k && k > 0 {
        hits.select_nth_unstable_by(k - 1, order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(order);
    hits.truncate(k);
    Ok(hits)
}

pub fn search(
    index: &InvertedIndex,
    params: &Bm25Params,
    topic_id: &str,
    query: &ProcessedQuery,
    k: usize,
) -> Result<Ranking, RetrievalError> {
    let entries = top_k(index, params, query, k)?
        .into_iter()
        .map(|(ord, score)| ScoredDoc {
            docno: index.doc(ord).docno.clone(),
            score,
        })
        .collect();
    Ok(Ranking {
        topic_id: topic_id.to_string(),
        entries,
    })
}

/// The four query configurations compared in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunStrategy {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "original+rm3")]
    OriginalRm3,
    #[serde(rename = "generated")]
    Generated,
    #[serde(rename = "concat")]
    Concat,
}

impl RunStrategy {
    pub const ALL: [RunStrategy; 4] = [
        RunStrategy::Original,
        RunStrategy::OriginalRm3,
        RunStrategy::Generated,
        RunStrategy::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunStrategy::Original => "original",
            RunStrategy::OriginalRm3 => "original+rm3",
            RunStrategy::Generated => "generated",
            RunStrategy::Concat => "concat",
        }
    }

    pub fn needs_generated(self) -> bool {
        matches!(self, RunStrategy::Generated | RunStrategy::Concat)
    }
}

impl std::fmt::Display for RunStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RunStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RunStrategy::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected original, original+rm3, generated or concat)"))
    }
}

/// Everything needed to turn queries into rankings over one index.
#[derive(Debug, Clone, Copy)]
pub struct Retriever<'a> {
    pub index: &'a InvertedIndex,
    pub analyzer: &'a Analyzer,
    pub bm25: Bm25Params,
    pub rm3: Rm3Params,
}

impl<'a> Retriever<'a> {
    pub fn new(
        index: &'a InvertedIndex,
        analyzer: &'a Analyzer,
        bm25: Bm25Params,
        rm3: Rm3Params,
    ) -> Result<Self, RetrievalError> {
        bm25.validate()?;
        rm3.validate()?;
        if !index.matches_pipeline(analyzer) {
            return Err(RetrievalError::PipelineMismatch {
                query: analyzer.pipeline_hash().to_string(),
                index: index.stats_hash().to_string(),
            });
        }
        Ok(Retriever {
            index,
            analyzer,
            bm25,
            rm3,
        })
    }

    pub fn search(&self, topic_id: &str, query: &ProcessedQuery, k: usize) -> Result<Ranking, RetrievalError> {
        search(self.index, &self.bm25, topic_id, query, k)
    }

    pub fn expand(&self, query: &ProcessedQuery) -> Result<ProcessedQuery, RetrievalError> {
        rm3_expand(self.index, self.analyzer.stoplist(), &self.bm25, query, &self.rm3)
    }

    /// The final query for a note under a strategy.
    pub fn final_query(
        &self,
        strategy: RunStrategy,
        note: &str,
        generated: Option<&ProcessedQuery>,
    ) -> Result<ProcessedQuery, RetrievalError> {
        match strategy {
            RunStrategy::Original => Ok(self.analyzer.process(note)),
            RunStrategy::OriginalRm3 => {
                let q = self.analyzer.process(note);
                if q.is_empty() {
                    Ok(q)
                } else {
                    self.expand(&q)
                }
            }
            RunStrategy::Generated | RunStrategy::Concat => {
                let gen = generated.ok_or_else(|| RetrievalError::MissingBundle(String::new()))?;
                let qs = if strategy == RunStrategy::Generated {
                    QueryStrategy::GeneratedOnly
                } else {
                    QueryStrategy::ConcatOriginal
                };
                let q = self.analyzer.build_query(qs, note, gen);
                check_pipeline(self.index, &q)?;
                Ok(q)
            }
        }
    }

    /// Rank every topic. Output is grouped by topic in topic-id order.
    pub fn run_topics(
        &self,
        topics: &[PatientTopic],
        strategy: RunStrategy,
        generated: Option<&HashMap<String, ProcessedQuery>>,
        k: usize,
        tag: &str,
    ) -> Result<RunOutput, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidParams("k must be >= 1".into()));
        }
        let mut per_topic: Vec<(String, Ranking, usize)> = topics
            .par_iter()
            .map(|t| {
                let gen = if strategy.needs_generated() {
                    Some(
                        generated
                            .and_then(|m| m.get(&t.topic_id))
                            .ok_or_else(|| RetrievalError::MissingBundle(t.topic_id.clone()))?,
                    )
                } else {
                    None
                };
                let q = self.final_query(strategy, &t.note_text, gen)?;
                let ranking = self.search(&t.topic_id, &q, k)?;
                Ok((t.topic_id.clone(), ranking, q.term_count()))
            })
            .collect::<Result<_, RetrievalError>>()?;
        per_topic.sort_by(|a, b| topic_order(&a.0, &b.0));

        let mut out = RunOutput::default();
        for (topic, ranking, n_terms) in per_topic {
            if n_terms == 0 {
                let msg = format!("topic {topic}: empty final query, no results");
                tracing::warn!("{msg}");
                out.warnings.push(msg);
            }
            out.entries.extend(ranking.to_run_entries(tag));
            out.query_lengths.push((topic, n_terms));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub entries: Vec<RunEntry>,
    /// Final query length per topic, in topic order.
    pub query_lengths: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

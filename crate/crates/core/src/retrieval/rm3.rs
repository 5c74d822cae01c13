//! RM3-style pseudo-relevance feedback.
//!
//! Feedback documents are the top BM25 hits, weighted by a softmax over
//! their scores. A candidate term scores `sum_d w(d) * tf(t,d) / dl(d)`.
//! The best `fb_terms` candidates that are neither stopwords nor already in
//! the query are appended to the original terms, unweighted.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{top_k, Bm25Params, RetrievalError};
use crate::index::InvertedIndex;
use crate::textproc::{ProcessedQuery, Stoplist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rm3Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Dirichlet smoothing mass. Recorded with runs; the term-scoring rule
    /// above does not use it.
    pub mu: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Rm3Params {
            fb_docs: 10,
            fb_terms: 20,
            mu: 2500.0,
        }
    }
}

impl Rm3Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.fb_docs == 0 {
            return Err(RetrievalError::InvalidParams("fb_docs must be >= 1".into()));
        }
        if self.mu.is_nan() || self.mu < 0.0 {
            return Err(RetrievalError::InvalidParams(format!("mu must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Candidate expansion terms with their feedback weight, best first.
pub fn feedback_terms(
    index: &InvertedIndex,
    stoplist: &Stoplist,
    bm25: &Bm25Params,
    query: &ProcessedQuery,
    params: &Rm3Params,
) -> Result<Vec<(String, f64)>, RetrievalError> {
    params.validate()?;
    let hits = top_k(index, bm25, query, params.fb_docs)?;
    if hits.is_empty() || params.fb_terms == 0 {
        return Ok(Vec::new());
    }

    let max = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = hits.iter().map(|h| (h.1 - max).exp()).collect();
    let z: f64 = exp.iter().sum();

    let mut weights: HashMap<u32, f64> = HashMap::new();
    for ((ord, _), e) in hits.iter().zip(&exp) {
        let w = e / z;
        let dl = index.doc(*ord).length as f64;
        for &(tid, tf) in index.doc_terms(*ord) {
            *weights.entry(tid).or_insert(0.0) += w * tf as f64 / dl;
        }
    }

    let in_query: HashSet<&str> = query.terms.iter().map(String::as_str).collect();
    let mut scored: Vec<(String, f64)> = weights
        .into_iter()
        .map(|(tid, w)| (index.term(tid), w))
        .filter(|(t, _)| !stoplist.contains(t) && !in_query.contains(t))
        .map(|(t, w)| (t.to_string(), w))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(params.fb_terms);
    Ok(scored)
}

/// Original terms followed by up to `fb_terms` expansion terms. Returns the
/// query unchanged when nothing is retrieved.
pub fn rm3_expand(
    index: &InvertedIndex,
    stoplist: &Stoplist,
    bm25: &Bm25Params,
    query: &ProcessedQuery,
    params: &Rm3Params,
) -> Result<ProcessedQuery, RetrievalError> {
    let expansion = feedback_terms(index, stoplist, bm25, query, params)?;
    let mut out = query.clone();
    out.terms.extend(expansion.into_iter().map(|(t, _)| t));
    Ok(out)
}

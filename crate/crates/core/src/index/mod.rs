//! In-memory inverted index over the trial corpus.
//!
//! Each trial is indexed as one bag of words built from its title,
//! conditions, summary, detailed description and eligibility criteria.
//! Documents are ordered by docno, so the ordinal assigned to a trial does
//! not depend on the order the corpus was read in.

mod snapshot;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::ClinicalTrialDoc;
use crate::textproc::Analyzer;

pub use snapshot::{FORMAT_VERSION, MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate docno {0}")]
    DuplicateDocno(String),
    #[error("index format version {found} is not supported (expected {expected}); rebuild the index")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("not an index snapshot (bad magic header)")]
    NotAnIndex,
    #[error("corrupt index snapshot: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocEntry {
    pub docno: String,
    pub length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TermStats {
    /// Documents containing the term.
    pub df: u32,
    /// Total occurrences across the collection.
    pub cf: u64,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    /// Sorted vocabulary; term ids index into this and `postings`.
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    docs: Vec<DocEntry>,
    docno_ids: HashMap<String, u32>,
    total_length: u64,
    stats_hash: String,
    /// Per-document (term id, tf) lists, derived from `postings`.
    forward: Vec<Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Assemble from parts, deriving the lookup tables. Callers guarantee
    /// the structural invariants (sorted unique terms, increasing postings).
    fn from_parts(
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        docs: Vec<DocEntry>,
        stats_hash: String,
    ) -> Self {
        let term_ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let docno_ids = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.docno.clone(), i as u32))
            .collect();
        let total_length = docs.iter().map(|d| d.length as u64).sum();
        let mut forward: Vec<Vec<(u32, u32)>> = vec![Vec::new(); docs.len()];
        for (tid, plist) in postings.iter().enumerate() {
            for p in plist {
                forward[p.doc as usize].push((tid as u32, p.tf));
            }
        }
        InvertedIndex {
            terms,
            term_ids,
            postings,
            docs,
            docno_ids,
            total_length,
            stats_hash,
            forward,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.total_length as f64 / self.docs.len() as f64
    }

    pub fn total_length(&self) -> u64 {
        self.total_length
    }

    pub fn vocab_size(&self) -> usize {
        self.terms.len()
    }

    /// Hash of the text pipeline the index was built with.
    pub fn stats_hash(&self) -> &str {
        &self.stats_hash
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_id(term)
            .map_or(&[], |id| self.postings[id as usize].as_slice())
    }

    pub fn postings_by_id(&self, id: u32) -> &[Posting] {
        &self.postings[id as usize]
    }

    /// `(0, 0)` for unseen terms.
    pub fn term_stats(&self, term: &str) -> TermStats {
        let plist = self.postings(term);
        TermStats {
            df: plist.len() as u32,
            cf: plist.iter().map(|p| p.tf as u64).sum(),
        }
    }

    pub fn doc(&self, ordinal: u32) -> &DocEntry {
        &self.docs[ordinal as usize]
    }

    pub fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn doc_ordinal(&self, docno: &str) -> Option<u32> {
        self.docno_ids.get(docno).copied()
    }

    /// `(term id, tf)` pairs of one document, by term id.
    pub fn doc_terms(&self, ordinal: u32) -> &[(u32, u32)] {
        &self.forward[ordinal as usize]
    }

    pub fn tf(&self, term: &str, ordinal: u32) -> u32 {
        let plist = self.postings(term);
        plist
            .binary_search_by_key(&ordinal, |p| p.doc)
            .map_or(0, |i| plist[i].tf)
    }

    /// Whether a query pipeline matches the one this index was built with.
    pub fn matches_pipeline(&self, analyzer: &Analyzer) -> bool {
        self.stats_hash == analyzer.pipeline_hash()
    }
}

/// Index a corpus. Every document is analyzed with the same pipeline used
/// for queries.
pub fn build_index<'a, I>(docs: I, analyzer: &Analyzer) -> Result<InvertedIndex, IndexError>
where
    I: IntoIterator<Item = &'a ClinicalTrialDoc>,
{
    let docs: Vec<&ClinicalTrialDoc> = docs.into_iter().collect();
    if docs.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut analyzed: Vec<(&str, Vec<String>)> = docs
        .par_iter()
        .map(|d| (d.docno.as_str(), analyzer.analyze(&d.indexable_text())))
        .collect();
    analyzed.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = analyzed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IndexError::DuplicateDocno(w[0].0.to_string()));
    }

    let mut by_term: HashMap<&str, Vec<Posting>> = HashMap::new();
    let mut doc_table = Vec::with_capacity(analyzed.len());
    for (ordinal, (docno, terms)) in analyzed.iter().enumerate() {
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for t in terms {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (t, tf) in counts {
            by_term.entry(t).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
        doc_table.push(DocEntry {
            docno: docno.to_string(),
            length: terms.len() as u32,
        });
    }
    let mut vocab: Vec<(&str, Vec<Posting>)> = by_term.into_iter().collect();
    vocab.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let (terms, postings): (Vec<String>, Vec<Vec<Posting>>) = vocab
        .into_iter()
        .map(|(t, p)| (t.to_string(), p))
        .unzip();
    Ok(InvertedIndex::from_parts(
        terms,
        postings,
        doc_table,
        analyzer.pipeline_hash().to_string(),
    ))
}

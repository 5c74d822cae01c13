//! Clinical-trial retrieval core.
//!
//! Patient notes (or LLM-generated queries derived from them) are matched
//! against an inverted index of trial registrations with BM25, optionally
//! expanded with RM3 feedback, and evaluated against graded TREC judgments.

pub mod textproc;
pub mod corpus;
pub mod index;
pub mod retrieval;
pub mod eval;
pub mod querygen;

use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::TokenStream;

const BUNDLED_ENGLISH: &str = include_str!("../../data/stopwords-en.txt");

/// A set of lowercase stopwords plus a content hash used to pin runs and
/// indexes to the exact list they were built with.
#[derive(Debug, Clone)]
pub struct Stoplist {
    words: HashSet<String>,
    hash: String,
}

impl Stoplist {
    /// Parse the one-word-per-line format. `#` starts a comment, blank
    /// lines are ignored, words are lowercased.
    pub fn parse(text: &str) -> Self {
        let words: HashSet<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self::from_words(words)
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        let mut sorted: Vec<&str> = words.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let mut hasher = Sha256::new();
        for w in sorted {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        let hash = hex::encode(hasher.finalize());
        Stoplist { words, hash }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The versioned English list shipped with the crate.
    pub fn english() -> Self {
        Self::parse(BUNDLED_ENGLISH)
    }

    pub fn empty() -> Self {
        Self::from_words(Vec::<String>::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Hex SHA-256 over the sorted word list.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

impl Default for Stoplist {
    fn default() -> Self {
        Self::english()
    }
}

/// Order-preserving filter.
pub fn remove_stopwords(tokens: TokenStream, stoplist: &Stoplist) -> TokenStream {
    TokenStream::new(
        tokens
            .into_iter()
            .filter(|t| !stoplist.contains(t))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;

    #[test]
    fn standard_list_filters_function_words() {
        let out = remove_stopwords(tokenize("the patient is male"), &Stoplist::english());
        assert_eq!(out.tokens(), ["patient", "male"]);
    }

    #[test]
    fn empty_list_is_identity() {
        let toks = tokenize("the patient is male");
        assert_eq!(remove_stopwords(toks.clone(), &Stoplist::empty()), toks);
    }

    #[test]
    fn parse_handles_comments_and_case() {
        let s = Stoplist::parse("# header\nThe\n\n  and  # trailing\n");
        assert_eq!(s.len(), 2);
        assert!(s.contains("the") && s.contains("and"));
    }

    #[test]
    fn hash_ignores_order_and_duplicates() {
        let a = Stoplist::from_words(["b", "a"]);
        let b = Stoplist::parse("a\nb\na\n");
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), Stoplist::empty().hash());
    }

    #[test]
    fn bundled_list_is_pinned() {
        let s = Stoplist::english();
        assert_eq!(s.len(), 318);
        assert!(s.contains("the") && s.contains("is") && !s.contains("patient"));
    }
}

use serde::{Deserialize, Serialize};

/// Tokens longer than this (in chars) are dropped.
pub const MAX_TOKEN_CHARS: usize = 64;

/// Lowercased alphanumeric tokens in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenStream(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl IntoIterator for TokenStream {
    type Item = String;
    type IntoIter = std::vec::IntoIter<String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Split on every non-alphanumeric character and lowercase.
///
/// Digits are kept. Hyphenated compounds come apart: `52-year-old` yields
/// `52`, `year`, `old`.
pub fn tokenize(text: &str) -> TokenStream {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|frag| !frag.is_empty())
        .map(str::to_lowercase)
        // lowercasing can expand some characters into combining marks
        .flat_map(|t| {
            if t.chars().all(char::is_alphanumeric) {
                vec![t]
            } else {
                t.split(|c: char| !c.is_alphanumeric())
                    .filter(|f| !f.is_empty())
                    .map(str::to_string)
                    .collect()
            }
        })
        .filter(|t| t.chars().count() <= MAX_TOKEN_CHARS)
        .collect();
    TokenStream(tokens)
}

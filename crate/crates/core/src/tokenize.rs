//! Word tokenization shared by the edit and text metrics.
//!
//! Text is lowercased and split on Unicode whitespace; inside each chunk,
//! every character that is not alphanumeric becomes a standalone token.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub source_text: String,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_strs(&self) -> Vec<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq {
        tokens: tokens(text),
        source_text: text.to_string(),
    }
}

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// True for tokens made only of punctuation or symbols.
pub fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

//! Pluggable tokenization.
//!
//! Token counts everywhere in the toolkit go through the [`Tokenizer`] trait
//! so a model tokenizer can be swapped in. The default is a whitespace
//! tokenizer: a token is a maximal non-whitespace run.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Default tokenizer: splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// One token per character. Used for title tries when no model tokenizer is
/// injected, and in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl Tokenizer for CharTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.chars().map(|c| c.to_string()).collect()
    }

    fn count(&self, text: &str) -> usize {
        text.chars().count()
    }
}

/// Tokenizer selection as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    Char,
}

impl TokenizerKind {
    pub fn build(self) -> Arc<dyn Tokenizer> {
        match self {
            TokenizerKind::Whitespace => Arc::new(WhitespaceTokenizer),
            TokenizerKind::Char => Arc::new(CharTokenizer),
        }
    }
}

impl fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerKind::Whitespace => write!(f, "whitespace"),
            TokenizerKind::Char => write!(f, "char"),
        }
    }
}

impl FromStr for TokenizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(TokenizerKind::Whitespace),
            "char" => Ok(TokenizerKind::Char),
            other => Err(format!("unknown tokenizer `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_splits_maximal_runs() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.tokenize("a  b\tc\n"), vec!["a", "b", "c"]);
        assert_eq!(t.count("  "), 0);
    }

    #[test]
    fn char_tokenizer_counts_chars() {
        let t = CharTokenizer;
        assert_eq!(t.tokenize("ab"), vec!["a", "b"]);
        assert_eq!(t.count("héllo"), 5);
    }
}

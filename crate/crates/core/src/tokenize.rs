//! Canonical tokenizer.
//!
//! Every token-denominated quantity in the toolkit (target spans, target
//! lengths, BLEU n-grams, guardrail overlap) goes through [`tokenize`]. The
//! rules are deliberately small and frozen by the golden file in
//! `tests/fixtures/tokenizer_golden.tsv`; changing them changes
//! [`TOKENIZER_VERSION`] and therefore every report fingerprint.

use sha2::{Digest, Sha256};

/// Bumped whenever tokenization output changes for any input.
pub const TOKENIZER_VERSION: &str = "ws-punct/1";

const OPENING: &[char] = &['(', '[', '{', '"', '\'', '“', '‘'];
const CLOSING: &[char] = &[
    '.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\'', '”', '’',
];

// Detokenization glue: no space before these, no space after those.
const GLUE_LEFT: &[&str] = &[".", ",", ";", ":", "!", "?", ")", "]", "}", "”", "’"];
const GLUE_RIGHT: &[&str] = &["(", "[", "{", "“", "‘"];

fn is_edge_punct(c: char) -> bool {
    OPENING.contains(&c) || CLOSING.contains(&c)
}

/// Splits on whitespace, then peels opening punctuation off the front and
/// terminal/clause punctuation off the back of each chunk. Word-internal
/// punctuation (`Here's`, `3.5`, `well-known`) is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk.chars().all(is_edge_punct) {
            out.extend(chunk.chars().map(String::from));
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        while start < chars.len() && OPENING.contains(&chars[start]) {
            out.push(chars[start].to_string());
            start += 1;
        }
        let mut end = chars.len();
        while end > start && CLOSING.contains(&chars[end - 1]) {
            end -= 1;
        }
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

/// Joins tokens back into readable text. `tokenize(&detokenize(&t)) == t`
/// for any `t` produced by [`tokenize`].
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for tok in tokens {
        let tok = tok.as_ref();
        if !glue_next && !GLUE_LEFT.contains(&tok) {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = GLUE_RIGHT.contains(&tok);
    }
    out
}

/// Lowercased alphanumeric tokens that are not function words.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(|t| t.to_lowercase())
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// True when the token carries at least one letter or digit.
pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Stable hash identifying the tokenizer in report fingerprints.
pub fn fingerprint() -> String {
    let digest = Sha256::digest(TOKENIZER_VERSION.as_bytes());
    hex::encode(&digest[..8])
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "to", "in", "on", "at", "by", "for", "with",
    "from", "as", "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did",
    "have", "has", "had", "it", "its", "this", "that", "these", "those", "he", "she", "they",
    "them", "his", "her", "their", "we", "you", "i", "me", "my", "our", "your", "not", "no", "so",
    "what", "why", "how", "who", "whom", "which", "when", "where", "can", "could", "would",
    "should", "will", "shall", "may", "might", "must", "there", "here", "about", "into", "than",
    "then", "also", "just", "very", "some", "any", "all", "more", "most", "such", "up", "out",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_terminal_punctuation() {
        assert_eq!(tokenize("Here's how."), vec!["Here's", "how", "."]);
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
        assert_eq!(tokenize("a  b"), vec!["a", "b"]);
    }

    #[test]
    fn detokenize_glues_punctuation() {
        let toks = tokenize("Munro grew up in Wingham, a town (west of Toronto).");
        assert_eq!(
            detokenize(&toks),
            "Munro grew up in Wingham, a town (west of Toronto)."
        );
    }

    #[test]
    fn content_tokens_drop_function_words() {
        assert_eq!(
            content_tokens("What do call centers do?"),
            vec!["call", "centers"]
        );
    }
}

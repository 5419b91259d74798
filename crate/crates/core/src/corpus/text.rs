//! Text sanitization and tokenization for bag-of-words features.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// English stopword list, one token per line.
pub const STOPWORDS_EN: &str = include_str!("../../resources/stopwords_en.txt");

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_EN.lines().filter(|l| !l.is_empty()).collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token)
}

/// Hex SHA-256 of the embedded stopword resource. Recorded in model files so a
/// consumer can detect a tokenizer that differs from the producer's.
pub fn stopwords_sha256() -> String {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| hex(&Sha256::digest(STOPWORDS_EN.as_bytes())))
        .clone()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0xFE0F | 0x200D)
}

/// Removes URLs and, for tweets, `@handles` and emoji.
///
/// A URL is a run starting at `http://`, `https://`, or a token-initial
/// `www.` and extending to the next whitespace character. Everything else,
/// including the surrounding whitespace, is left untouched.
pub fn sanitize_text(raw: &str, is_tweet: bool) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    let mut at_token_start = true;
    while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            out.push(c);
            rest = &rest[c.len_utf8()..];
            at_token_start = true;
            continue;
        }
        let url_start = rest.starts_with("http://")
            || rest.starts_with("https://")
            || (at_token_start && rest.starts_with("www."));
        if url_start || (is_tweet && at_token_start && c == '@') {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            rest = &rest[end..];
            continue;
        }
        if !(is_tweet && is_emoji(c)) {
            out.push(c);
        }
        rest = &rest[c.len_utf8()..];
        at_token_start = false;
    }
    out
}

/// Splits sanitized text into lowercase word tokens.
///
/// Each whitespace-delimited word is lowercased and stripped of every
/// non-alphanumeric character. Stopwords, pure numbers, and tokens mixing
/// letters with digits are dropped. Non-ASCII letters are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        // contractions like "don't" are listed verbatim in the stopword file
        if is_stopword(lower.trim_matches(|c: char| !c.is_alphanumeric())) {
            continue;
        }
        let clean: String = lower.chars().filter(|c| c.is_alphanumeric()).collect();
        if clean.is_empty() || is_stopword(&clean) {
            continue;
        }
        let has_digit = clean.chars().any(char::is_numeric);
        if has_digit {
            // pure numbers and mixed alphanumerics are both dropped
            continue;
        }
        tokens.push(clean);
    }
    tokens
}

/// The text-to-token pipeline shared by producer and consumer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPipeline {
    /// Strip `@handles` and emoji in addition to URLs.
    pub tweet_mode: bool,
}

impl TextPipeline {
    pub fn tokens(&self, raw: &str) -> Vec<String> {
        tokenize(&sanitize_text(raw, self.tweet_mode))
    }
}

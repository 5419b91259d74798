use std::collections::HashMap;

use crate::error::{Error, Result};

/// Ordered token set. Position `j` is feature `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in their final order. Duplicates are
    /// rejected.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, position: usize) -> &str {
        &self.tokens[position]
    }
}

/// Keeps the `v_max` most frequent tokens, counting every occurrence. Ties are
/// broken by ascending lexicographic order.
pub fn build_vocabulary<I, T>(token_lists: I, v_max: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[String]>,
{
    if v_max == 0 {
        return Err(Error::InvalidArgument("v_max must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let lists: Vec<T> = token_lists.into_iter().collect();
    if lists.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for list in &lists {
        for t in list.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(v_max);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_owned()).collect())
}

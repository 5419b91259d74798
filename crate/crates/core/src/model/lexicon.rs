use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::LinearModel;

/// Ranked per-class word associations read off the weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub classes: Vec<String>,
    /// `entries[c]` is sorted by descending weight.
    pub entries: Vec<Vec<(String, f64)>>,
}

/// The `top_n` highest-weighted tokens of each class column, ties broken
/// lexicographically. Factorized models are read through their product.
pub fn elicit_lexicon(model: &LinearModel, top_n: usize) -> Lexicon {
    let w = model.weights.effective();
    let tokens = model.vocab.tokens();
    let entries = (0..model.k())
        .map(|c| {
            let mut ranked: Vec<usize> = (0..tokens.len()).collect();
            ranked.sort_by(|&a, &b| w[[b, c]].total_cmp(&w[[a, c]]).then_with(|| tokens[a].cmp(&tokens[b])));
            ranked.truncate(top_n);
            ranked.into_iter().map(|j| (tokens[j].clone(), w[[j, c]])).collect()
        })
        .collect();
    Lexicon {
        classes: model.labels.clone(),
        entries,
    }
}

impl Lexicon {
    /// One word list per class.
    pub fn word_lists(&self) -> Vec<WordList> {
        self.entries.iter().map(|e| WordList::weighted(e.iter().cloned())).collect()
    }

    /// Per-class lexicon scores of a document.
    pub fn scores<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.word_lists().iter().map(|l| lexicon_score(l, tokens)).collect()
    }
}

/// A word list with optional weights (unweighted entries count 1.0).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WordList {
    pub weights: BTreeMap<String, f64>,
}

impl WordList {
    pub fn weighted(items: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            weights: items.into_iter().collect(),
        }
    }

    pub fn unweighted<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Self::weighted(words.into_iter().map(|w| (w.into(), 1.0)))
    }

    /// Binary lexicon from a model: weights `W[., positive] - W[., negative]`
    /// over the whole vocabulary.
    pub fn class_difference(model: &LinearModel, positive: usize, negative: usize) -> Self {
        let w = model.weights.effective();
        Self::weighted(
            model
                .vocab
                .tokens()
                .iter()
                .enumerate()
                .map(|(j, t)| (t.clone(), w[[j, positive]] - w[[j, negative]])),
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Sum of list weights over the distinct document tokens found in the list.
pub fn lexicon_score<S: AsRef<str>>(list: &WordList, tokens: &[S]) -> f64 {
    let distinct: HashSet<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let mut present: Vec<&str> = distinct.into_iter().collect();
    present.sort_unstable();
    present.iter().filter_map(|t| list.weights.get(*t)).sum()
}

/// Positive iff `score > threshold`.
pub fn classify_with_threshold(score: f64, threshold: f64) -> bool {
    score > threshold
}

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;

/// Sparse feature vector with entries sorted by position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Builds a vector from `(position, value)` pairs. Pairs are sorted;
    /// positions must be distinct and below `dim`.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|e| e.0 < dim));
        Self { dim, entries }
    }

    /// Indicator vector with a 1.0 at each listed position.
    pub fn binary(dim: usize, mut positions: Vec<usize>) -> Self {
        positions.sort_unstable();
        positions.dedup();
        Self::new(dim, positions.into_iter().map(|p| (p, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v == 1.0)
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(j, v) in &self.entries {
            d[j] = v;
        }
        d
    }
}

/// Binarized bag-of-words encoding: 1.0 at every vocabulary position whose token
/// occurs at least once. Out-of-vocabulary tokens are ignored.
pub fn featurize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> FeatureVector {
    let positions = tokens.iter().filter_map(|t| vocab.get(t.as_ref())).collect();
    FeatureVector::binary(vocab.len(), positions)
}

/// Row-compressed binary design matrix used by the trainer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryRows {
    dim: usize,
    offsets: Vec<usize>,
    columns: Vec<u32>,
}

impl BinaryRows {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            offsets: vec![0],
            columns: Vec::new(),
        }
    }

    pub fn from_vectors<'a, I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut m = Self::new(dim);
        for fv in rows {
            debug_assert!(fv.is_binary());
            m.push(fv.positions());
        }
        m
    }

    pub fn push(&mut self, positions: impl IntoIterator<Item = usize>) {
        self.columns.extend(positions.into_iter().map(|p| p as u32));
        self.offsets.push(self.columns.len());
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.columns[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let mut m = Self::new(self.dim);
        for &i in rows {
            m.push(self.row(i).iter().map(|&c| c as usize));
        }
        m
    }

    pub fn to_vector(&self, i: usize) -> FeatureVector {
        FeatureVector::binary(self.dim, self.row(i).iter().map(|&c| c as usize).collect())
    }
}

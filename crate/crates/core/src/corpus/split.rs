use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tags, SeededRng};

/// How many documents of each domain go to the test split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSize {
    /// Fixed number per domain.
    Count(usize),
    /// Fraction of each domain, rounded to the nearest integer.
    Fraction(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test: TestSize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn count(n: usize, seed: u64) -> Self {
        Self {
            test: TestSize::Count(n),
            seed,
        }
    }

    pub fn fraction(f: f64, seed: u64) -> Self {
        Self {
            test: TestSize::Fraction(f),
            seed,
        }
    }
}

/// Per-domain random train/test partition. Both outputs keep corpus order.
pub fn split_dataset(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    if let TestSize::Fraction(f) = spec.test {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!("test fraction {f} outside [0, 1]")));
        }
    }
    let mut is_test = vec![false; corpus.len()];
    for (di, domain) in corpus.domains().iter().enumerate() {
        let mut positions = corpus.domain_positions(domain);
        let n = positions.len();
        let n_test = match spec.test {
            TestSize::Count(c) => c,
            TestSize::Fraction(f) => (n as f64 * f).round() as usize,
        };
        if n_test > n {
            return Err(Error::InvalidArgument(format!(
                "domain {domain:?} has {n} documents, fewer than the {n_test} requested for test"
            )));
        }
        let mut rng = SeededRng::new(derive_seed(spec.seed, tags::SPLIT, di as u64));
        rng.shuffle(&mut positions);
        for &p in &positions[..n_test] {
            is_test[p] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| is_test[i]);
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

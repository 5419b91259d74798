//! Seeded synthetic multi-domain corpora with known label priors, class
//! signal words and domain background words.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Document};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tags, SeededRng};

/// A token set emitted independently, each token with `emission` probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSet {
    pub tokens: Vec<String>,
    pub emission: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub labels: Vec<String>,
    pub domains: Vec<String>,
    /// Label prior of each domain.
    pub priors: Vec<Vec<f64>>,
    /// Signal words of each class.
    pub signal: Vec<TokenSet>,
    /// Emission probability of a signal word when the document's class is a
    /// different one.
    #[serde(default)]
    pub off_class_emission: f64,
    /// Background words of each domain.
    pub background: Vec<TokenSet>,
    /// Class- and domain-independent filler.
    pub neutral: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub n_docs: usize,
    pub seed: u64,
}

/// Base-26 lowercase code of `i`, `width` letters.
fn letters(mut i: usize, width: usize) -> String {
    let mut out = vec![b'a'; width];
    for slot in out.iter_mut().rev() {
        *slot = b'a' + (i % 26) as u8;
        i /= 26;
    }
    String::from_utf8(out).expect("ascii")
}

/// The fixed benchmark: 4 classes, 4 domains of 1500 documents, each domain
/// favoring one class at 0.55 (0.15 for the others).
pub fn default_benchmark_spec() -> SynthSpec {
    SynthSpec::rotated(4, 4, 1500, 20240401)
}

impl SynthSpec {
    /// `k` classes and `m` domains where domain `d` favors class `d mod k`
    /// at 0.55 and shares the rest evenly. Signal words: 12 per class at 0.35
    /// (0.15 off-class); background: 30 per domain at 0.5; 200 neutral
    /// words; lengths 20 to 60.
    pub fn rotated(k: usize, m: usize, n_docs: usize, seed: u64) -> Self {
        let favored = 0.55;
        let rest = (1.0 - favored) / (k - 1) as f64;
        Self {
            labels: (0..k).map(|c| format!("class_{}", letters(c, 1))).collect(),
            domains: (0..m).map(|d| format!("domain_{}", letters(d, 1))).collect(),
            priors: (0..m)
                .map(|d| (0..k).map(|c| if c == d % k { favored } else { rest }).collect())
                .collect(),
            signal: (0..k)
                .map(|c| TokenSet {
                    tokens: (0..12).map(|j| format!("sig{}{}", letters(c, 1), letters(j, 2))).collect(),
                    emission: 0.35,
                })
                .collect(),
            off_class_emission: 0.15,
            background: (0..m)
                .map(|d| TokenSet {
                    tokens: (0..30).map(|j| format!("bkg{}{}", letters(d, 1), letters(j, 2))).collect(),
                    emission: 0.5,
                })
                .collect(),
            neutral: (0..200).map(|j| format!("neu{}", letters(j, 3))).collect(),
            min_len: 20,
            max_len: 60,
            n_docs,
            seed,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let (k, m) = (self.labels.len(), self.domains.len());
        if k < 2 || m == 0 {
            return bad("need at least 2 labels and 1 domain".into());
        }
        if self.priors.len() != m || self.background.len() != m || self.signal.len() != k {
            return bad("priors and background need one entry per domain, signal one per class".into());
        }
        for (d, p) in self.priors.iter().enumerate() {
            if p.len() != k || p.iter().any(|v| !(0.0..=1.0).contains(v)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("prior of domain {} is not a distribution over {k} labels", self.domains[d]));
            }
        }
        let probs = self.signal.iter().chain(&self.background).map(|t| t.emission).chain([self.off_class_emission]);
        if probs.into_iter().any(|p| !(0.0..=1.0).contains(&p)) {
            return bad("emission probabilities must lie in [0, 1]".into());
        }
        if self.min_len == 0 {
            return bad("min_len must be at least 1 (zero-length documents)".into());
        }
        if self.min_len > self.max_len {
            return bad(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len));
        }
        if self.n_docs == 0 {
            return bad("n_docs must be at least 1".into());
        }
        if self.neutral.is_empty() {
            return bad("need at least one neutral token".into());
        }
        let mut seen = HashSet::new();
        let all = self
            .signal
            .iter()
            .chain(&self.background)
            .flat_map(|t| &t.tokens)
            .chain(&self.neutral);
        for t in all {
            if !seen.insert(t.as_str()) {
                return bad(format!("token {t:?} appears in more than one set"));
            }
            if tokenize(t) != [t.clone()] {
                return bad(format!("token {t:?} does not survive tokenization"));
            }
        }
        Ok(())
    }
}

/// Generates `n_docs` documents per domain. Domains use independent derived
/// streams, so adding a domain leaves the others unchanged.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut docs = Vec::with_capacity(spec.n_docs * spec.domains.len());
    for (d, domain) in spec.domains.iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(spec.seed, tags::SYNTH, d as u64));
        for i in 0..spec.n_docs {
            let y = rng.categorical(&spec.priors[d]);
            let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
            let mut tokens: Vec<&str> = Vec::with_capacity(len);
            for (c, set) in spec.signal.iter().enumerate() {
                let p = if c == y { set.emission } else { spec.off_class_emission };
                for t in &set.tokens {
                    if rng.chance(p) {
                        tokens.push(t);
                    }
                }
            }
            for t in &spec.background[d].tokens {
                if rng.chance(spec.background[d].emission) {
                    tokens.push(t);
                }
            }
            while tokens.len() < len {
                tokens.push(&spec.neutral[rng.below(spec.neutral.len())]);
            }
            rng.shuffle(&mut tokens);
            docs.push(Document::new(format!("{domain}-{i:05}"), tokens.join(" "), Some(y), domain.clone()));
        }
    }
    Corpus::new(docs, spec.labels.clone(), spec.domains.clone())
}

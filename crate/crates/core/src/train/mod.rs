//! Full-batch proximal-gradient training with L1 on the weight matrices, and
//! lambda selection by domain-stratified k-fold cross-validation.

mod cv;
mod objective;
mod optimize;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    build_vocabulary, feature_means, featurize, hex, BinaryRows, Corpus, DomainStats, TextPipeline, Vocabulary,
};
use crate::adapt::estimate_label_distribution;
use crate::error::{Error, Result};

pub use cv::{default_lambda_grid, grid_search_lambda, kfold_splits, GridSearch, GridSearchResult};
pub use objective::{batch_gradients, batch_loss, cross_entropy, label_loss, Gradients, LossBreakdown};
pub use optimize::{proximal_step, train_full_batch, LogEntry, TrainedModel};

/// How domain identity enters the model during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    #[default]
    Base,
    /// Per-domain residual bias, dropped on unseen domains.
    Dr,
    /// Factorized weights with an adversarial domain head.
    Gr,
}

impl std::str::FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Technique::Base),
            "dr" => Ok(Technique::Dr),
            "gr" => Ok(Technique::Gr),
            _ => Err(Error::InvalidConfig(format!("unknown technique {s:?} (expected base, dr or gr)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub technique: Technique,
    pub dsb: bool,
    pub dsn: bool,
    /// L1 strength.
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the relative change of the objective falls below this.
    pub tol: f64,
    /// Multiplier on the domain loss (GR only).
    pub gr_weight: f64,
    /// Factorization rank; defaults to `max(k, 16)`.
    pub rank: Option<usize>,
    pub seed: u64,
    /// Additive smoothing for the per-domain label distributions stored in
    /// the model.
    pub stats_alpha: f64,
    /// Vocabulary size cap.
    pub vocab_size: usize,
    pub tweet_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            technique: Technique::Base,
            dsb: false,
            dsn: false,
            lambda: 1e-5,
            learning_rate: 0.5,
            max_iters: 2000,
            tol: 1e-6,
            gr_weight: 1.0,
            rank: None,
            seed: 0,
            stats_alpha: 1.0,
            vocab_size: 5000,
            tweet_mode: false,
        }
    }
}

impl TrainConfig {
    pub fn new(technique: Technique, dsb: bool, dsn: bool) -> Self {
        Self {
            technique,
            dsb,
            dsn,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if !(self.gr_weight >= 0.0 && self.gr_weight.is_finite()) {
            return bad("gr_weight must be >= 0");
        }
        if self.rank == Some(0) {
            return bad("rank must be >= 1");
        }
        if self.rank.is_some() && self.technique != Technique::Gr {
            return bad("rank only applies to the gr technique");
        }
        if !(self.stats_alpha >= 0.0) {
            return bad("stats_alpha must be >= 0");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be >= 1");
        }
        Ok(())
    }

    /// Short label such as `DSN+DSB` or `GR`.
    pub fn name(&self) -> String {
        crate::model::technique_name(
            self.technique == Technique::Dr,
            self.technique == Technique::Gr,
            crate::model::Flags {
                dsb: self.dsb,
                dsn: self.dsn,
            },
        )
    }

    /// SHA-256 of the canonical JSON form of this configuration.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex(&Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }
}

/// A featurized, fully labeled training corpus sharing one vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub labels: Vec<String>,
    /// Domains that have at least one row, in corpus order.
    pub domains: Vec<String>,
    pub vocab: Vocabulary,
    pub pipeline: TextPipeline,
    pub rows: BinaryRows,
    pub y: Vec<usize>,
    /// Index into `domains` for each row.
    pub domain_of: Vec<usize>,
    pub ids: Vec<String>,
}

impl TrainingSet {
    /// Builds the vocabulary from `corpus` itself, then featurizes it.
    pub fn build(corpus: &Corpus, vocab_size: usize, pipeline: TextPipeline) -> Result<Self> {
        let tokens: Vec<Vec<String>> = corpus.documents().iter().map(|d| pipeline.tokens(&d.raw_text)).collect();
        let vocab = build_vocabulary(&tokens, vocab_size)?;
        Self::assemble(corpus, vocab, pipeline, &tokens)
    }

    /// Featurizes `corpus` with an existing vocabulary.
    pub fn with_vocabulary(corpus: &Corpus, vocab: Vocabulary, pipeline: TextPipeline) -> Result<Self> {
        let tokens: Vec<Vec<String>> = corpus.documents().iter().map(|d| pipeline.tokens(&d.raw_text)).collect();
        Self::assemble(corpus, vocab, pipeline, &tokens)
    }

    fn assemble(corpus: &Corpus, vocab: Vocabulary, pipeline: TextPipeline, tokens: &[Vec<String>]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let y = corpus.gold_labels()?;
        let present: BTreeSet<&str> = corpus.documents().iter().map(|d| d.domain.as_str()).collect();
        let domains: Vec<String> = corpus.domains().iter().filter(|d| present.contains(d.as_str())).cloned().collect();
        let domain_of = corpus
            .documents()
            .iter()
            .map(|d| domains.iter().position(|x| *x == d.domain).expect("present"))
            .collect();
        let mut rows = BinaryRows::new(vocab.len());
        for t in tokens {
            rows.push(featurize(t, &vocab).positions());
        }
        Ok(Self {
            labels: corpus.labels().to_vec(),
            domains,
            vocab,
            pipeline,
            rows,
            y,
            domain_of,
            ids: corpus.documents().iter().map(|d| d.id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    /// Rows at `idx`; the domain list shrinks to the domains still present.
    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        let mut keep = vec![false; self.domains.len()];
        for &i in idx {
            keep[self.domain_of[i]] = true;
        }
        let mut remap = vec![usize::MAX; self.domains.len()];
        let mut domains = Vec::new();
        for (d, name) in self.domains.iter().enumerate() {
            if keep[d] {
                remap[d] = domains.len();
                domains.push(name.clone());
            }
        }
        TrainingSet {
            labels: self.labels.clone(),
            domains,
            vocab: self.vocab.clone(),
            pipeline: self.pipeline,
            rows: self.rows.select(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            domain_of: idx.iter().map(|&i| remap[self.domain_of[i]]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Per-domain label distributions (smoothed by `alpha`) and presence rates.
    pub fn domain_stats(&self, alpha: f64) -> Result<Vec<DomainStats>> {
        (0..self.domains.len())
            .map(|d| {
                let idx: Vec<usize> = (0..self.len()).filter(|&i| self.domain_of[i] == d).collect();
                let ys: Vec<usize> = idx.iter().map(|&i| self.y[i]).collect();
                let fvs: Vec<_> = idx.iter().map(|&i| self.rows.to_vector(i)).collect();
                Ok(DomainStats {
                    domain: self.domains[d].clone(),
                    n_instances: idx.len(),
                    label_dist: estimate_label_distribution(&ys, self.k(), alpha)?,
                    feature_means: feature_means(&fvs, self.vocab.len()),
                })
            })
            .collect()
    }
}

/// Result of [`fit`]: the final model and, when lambda was searched, the
/// search record.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub trained: TrainedModel,
    pub search: Option<GridSearchResult>,
}

/// Grid search (when `search` is given) followed by training on all of
/// `data` with the selected lambda.
pub fn fit(data: &TrainingSet, config: &TrainConfig, search: Option<&GridSearch>) -> Result<FitOutcome> {
    match search {
        None => Ok(FitOutcome {
            trained: train_full_batch(data, config)?,
            search: None,
        }),
        Some(s) => {
            let result = grid_search_lambda(data, config, s)?;
            let trained = train_full_batch(data, &config.with_lambda(result.best_lambda))?;
            Ok(FitOutcome {
                trained,
                search: Some(result),
            })
        }
    }
}

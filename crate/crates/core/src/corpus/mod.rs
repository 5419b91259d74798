//! Documents, corpora and the bag-of-words front end.

mod features;
mod jsonl;
mod split;
mod stats;
mod text;
mod vocab;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{featurize, BinaryRows, FeatureVector};
pub use jsonl::{load_jsonl, load_jsonl_with_schema, read_jsonl, write_jsonl, JsonlRecord, LabelSchema};
pub use split::{split_dataset, SplitSpec, TestSize};
pub use stats::{compute_domain_stats, feature_means, DomainStats};
pub use text::{is_stopword, sanitize_text, stopwords_sha256, tokenize, TextPipeline, STOPWORDS_EN};
pub(crate) use text::hex;
pub use vocab::{build_vocabulary, Vocabulary};

/// One text sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    /// Index into the owning corpus' label list.
    pub label: Option<usize>,
    pub domain: String,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, label: Option<usize>, domain: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            raw_text: raw_text.into(),
            label,
            domain: domain.into(),
        }
    }
}

/// A validated collection of documents over a fixed label set and domain list.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    labels: Vec<String>,
    domains: Vec<String>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, labels: Vec<String>, domains: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidCorpus(format!("need at least 2 labels, got {}", labels.len())));
        }
        if domains.is_empty() {
            return Err(Error::InvalidCorpus("need at least one domain".into()));
        }
        let domain_set: HashSet<&str> = domains.iter().map(String::as_str).collect();
        if domain_set.len() != domains.len() {
            return Err(Error::InvalidCorpus("duplicate domain name".into()));
        }
        if labels.iter().collect::<HashSet<_>>().len() != labels.len() {
            return Err(Error::InvalidCorpus("duplicate label name".into()));
        }
        let mut ids = HashSet::with_capacity(documents.len());
        for d in &documents {
            if d.domain.is_empty() {
                return Err(Error::InvalidCorpus(format!("document {} has an empty domain", d.id)));
            }
            if !domain_set.contains(d.domain.as_str()) {
                return Err(Error::InvalidCorpus(format!("document {} has unknown domain {:?}", d.id, d.domain)));
            }
            if let Some(l) = d.label {
                if l >= labels.len() {
                    return Err(Error::InvalidCorpus(format!("document {} has label index {l} out of range", d.id)));
                }
            }
            if !ids.insert(d.id.as_str()) {
                return Err(Error::InvalidCorpus(format!("duplicate document id {:?}", d.id)));
            }
        }
        Ok(Self {
            documents,
            labels,
            domains,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Number of classes.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn domain_index(&self, domain: &str) -> Option<usize> {
        self.domains.iter().position(|d| d == domain)
    }

    /// Document positions belonging to `domain`, in corpus order.
    pub fn domain_positions(&self, domain: &str) -> Vec<usize> {
        self.documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.domain == domain)
            .map(|(i, _)| i)
            .collect()
    }

    /// Documents at `positions`, keeping the label set and domain list.
    pub fn subset(&self, positions: &[usize]) -> Corpus {
        Corpus {
            documents: positions.iter().map(|&i| self.documents[i].clone()).collect(),
            labels: self.labels.clone(),
            domains: self.domains.clone(),
        }
    }

    /// Documents whose domain satisfies `keep`. The domain list is reduced to
    /// the kept domains that still have documents.
    pub fn filter_domains(&self, keep: impl Fn(&str) -> bool) -> Corpus {
        let documents: Vec<Document> = self.documents.iter().filter(|d| keep(&d.domain)).cloned().collect();
        let present: HashSet<&str> = documents.iter().map(|d| d.domain.as_str()).collect();
        let domains = self.domains.iter().filter(|d| present.contains(d.as_str())).cloned().collect();
        Corpus {
            documents,
            labels: self.labels.clone(),
            domains,
        }
    }

    /// Labels in corpus order; fails on the first unlabeled document.
    pub fn gold_labels(&self) -> Result<Vec<usize>> {
        self.documents
            .iter()
            .map(|d| d.label.ok_or_else(|| Error::Unlabeled(d.id.clone())))
            .collect()
    }

    /// Concatenates two corpora over the same labels. Domains are merged in
    /// first-appearance order.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        if self.labels != other.labels {
            return Err(Error::InvalidCorpus("cannot concatenate corpora with different label sets".into()));
        }
        let mut domains = self.domains.clone();
        for d in &other.domains {
            if !domains.contains(d) {
                domains.push(d.clone());
            }
        }
        let mut documents = self.documents.clone();
        documents.extend(other.documents.iter().cloned());
        Corpus::new(documents, self.labels.clone(), domains)
    }
}

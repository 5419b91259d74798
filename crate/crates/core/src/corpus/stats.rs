use serde::{Deserialize, Serialize};

use super::{featurize, Corpus, FeatureVector, TextPipeline, Vocabulary};
use crate::adapt::{estimate_label_distribution, LabelDistribution};
use crate::error::{Error, Result};

/// Per-domain aggregates a producer may publish: instance count, label
/// distribution and feature presence rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub domain: String,
    pub n_instances: usize,
    pub label_dist: LabelDistribution,
    pub feature_means: Vec<f64>,
}

/// Presence rate of each feature over `rows`: the fraction of vectors with a
/// nonzero entry at that position.
pub fn feature_means<'a, I>(rows: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut counts = vec![0usize; dim];
    let mut n = 0usize;
    for fv in rows {
        n += 1;
        for (j, v) in fv.entries() {
            if *v != 0.0 {
                counts[*j] += 1;
            }
        }
    }
    if n == 0 {
        return vec![0.0; dim];
    }
    counts.into_iter().map(|c| c as f64 / n as f64).collect()
}

/// Stats for every domain of a fully labeled corpus, in corpus domain order.
/// `alpha` is the additive smoothing applied to label counts.
pub fn compute_domain_stats(
    corpus: &Corpus,
    vocab: &Vocabulary,
    pipeline: &TextPipeline,
    alpha: f64,
) -> Result<Vec<DomainStats>> {
    let labels = corpus.gold_labels()?;
    let features: Vec<FeatureVector> = corpus
        .documents()
        .iter()
        .map(|d| featurize(&pipeline.tokens(&d.raw_text), vocab))
        .collect();
    corpus
        .domains()
        .iter()
        .map(|domain| {
            let pos = corpus.domain_positions(domain);
            if pos.is_empty() {
                return Err(Error::InvalidCorpus(format!("domain {domain:?} has no documents")));
            }
            let domain_labels: Vec<usize> = pos.iter().map(|&i| labels[i]).collect();
            Ok(DomainStats {
                domain: domain.clone(),
                n_instances: pos.len(),
                label_dist: estimate_label_distribution(&domain_labels, corpus.k(), alpha)?,
                feature_means: feature_means(pos.iter().map(|&i| &features[i]), vocab.len()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(docs: &[(&str, usize, &str)]) -> Corpus {
        let documents = docs
            .iter()
            .enumerate()
            .map(|(i, (t, l, d))| Document::new(i.to_string(), *t, Some(*l), *d))
            .collect();
        Corpus::new(documents, vec!["a".into(), "b".into()], vec!["x".into(), "y".into()]).unwrap()
    }

    fn vocab(ts: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(ts.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn counts_labels_without_smoothing() {
        let c = corpus(&[("cat", 0, "x"), ("dog", 0, "x"), ("cat dog", 1, "x"), ("cat", 1, "y")]);
        let stats = compute_domain_stats(&c, &vocab(&["cat", "dog"]), &TextPipeline::default(), 0.0).unwrap();
        let x = &stats[0];
        assert_eq!(x.n_instances, 3);
        assert!((x.label_dist.probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x.label_dist.probs[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((x.feature_means[0] - 2.0 / 3.0).abs() < 1e-15);
        // token in every doc of y
        assert_eq!(stats[1].feature_means, vec![1.0, 0.0]);
    }

    #[test]
    fn single_doc_domain_means_are_indicator() {
        let c = corpus(&[("dog fish", 0, "x"), ("cat", 1, "y")]);
        let v = vocab(&["cat", "dog", "fish"]);
        let stats = compute_domain_stats(&c, &v, &TextPipeline::default(), 1.0).unwrap();
        assert_eq!(stats[0].feature_means, vec![0.0, 1.0, 1.0]);
        let sum: f64 = stats[0].label_dist.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_domain_fails() {
        let documents = vec![Document::new("0", "cat", Some(0), "x")];
        let c = Corpus::new(documents, vec!["a".into(), "b".into()], vec!["x".into(), "y".into()]).unwrap();
        assert!(compute_domain_stats(&c, &vocab(&["cat"]), &TextPipeline::default(), 1.0).is_err());
    }
}

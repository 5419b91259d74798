//! Consumer-side adaptation of a published model: label-distribution
//! estimation, DSB and DSN without retraining, two-fold performance
//! estimation and threshold tuning.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{featurize, feature_means, FeatureVector, TextPipeline, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{log_probs, LinearModel, PredictionContext, Predictor};
use crate::rng::{derive_seed, tags, SeededRng};

/// Class frequencies for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
    pub n_samples_used: usize,
    #[serde(rename = "alpha")]
    pub smoothing_alpha: f64,
}

impl LabelDistribution {
    /// Wraps a user-supplied distribution. Entries must be nonnegative and sum
    /// to 1 within 1e-9.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidArgument("label distribution needs at least 2 classes".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("label distribution has a negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("label distribution sums to {sum}, not 1")));
        }
        Ok(Self {
            probs,
            n_samples_used: 0,
            smoothing_alpha: 0.0,
        })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
            n_samples_used: 0,
            smoothing_alpha: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// Element-wise log; fails on a zero entry.
    pub fn log_probs(&self) -> Result<Vec<f64>> {
        log_probs(&self.probs)
    }
}

/// The label-distribution file exchanged between consumer tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDistributionFile {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub n_samples_used: usize,
    pub alpha: f64,
}

impl LabelDistributionFile {
    pub fn new(labels: Vec<String>, dist: &LabelDistribution) -> Self {
        Self {
            labels,
            probs: dist.probs.clone(),
            n_samples_used: dist.n_samples_used,
            alpha: dist.smoothing_alpha,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    /// Reorders the probabilities to `labels`; every model label must appear.
    pub fn to_distribution(&self, labels: &[String]) -> Result<LabelDistribution> {
        if self.labels.len() != self.probs.len() {
            return Err(Error::InvalidArgument("labels and probs differ in length".into()));
        }
        let probs = labels
            .iter()
            .map(|l| {
                self.labels
                    .iter()
                    .position(|x| x == l)
                    .map(|i| self.probs[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("label distribution lacks label {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.labels.len() != labels.len() {
            return Err(Error::InvalidArgument("label distribution has labels the model does not know".into()));
        }
        let mut d = LabelDistribution::from_probs(probs)?;
        d.n_samples_used = self.n_samples_used;
        d.smoothing_alpha = self.alpha;
        Ok(d)
    }
}

/// `probs[c] = (count_c + alpha) / (n + k alpha)`.
pub fn estimate_label_distribution(samples: &[usize], k: usize, alpha: f64) -> Result<LabelDistribution> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    if samples.is_empty() && alpha == 0.0 {
        return Err(Error::InvalidArgument("cannot estimate a label distribution from zero samples without smoothing".into()));
    }
    let mut counts = vec![0usize; k];
    for &y in samples {
        if y >= k {
            return Err(Error::InvalidArgument(format!("label index {y} out of range for k={k}")));
        }
        counts[y] += 1;
    }
    let denom = samples.len() as f64 + k as f64 * alpha;
    Ok(LabelDistribution {
        probs: counts.iter().map(|&c| (c as f64 + alpha) / denom).collect(),
        n_samples_used: samples.len(),
        smoothing_alpha: alpha,
    })
}

/// A published model plus the target-domain information it is applied with.
/// The model itself is never modified.
#[derive(Clone, Debug)]
pub struct AdaptedModel<'a> {
    pub base: &'a LinearModel,
    pub target_label_dist: Option<LabelDistribution>,
    pub target_dsn_means: Option<Vec<f64>>,
}

impl<'a> AdaptedModel<'a> {
    pub fn new(base: &'a LinearModel) -> Self {
        Self {
            base,
            target_label_dist: None,
            target_dsn_means: None,
        }
    }

    /// Supplies target feature means; requires a DSN model.
    pub fn with_dsn_means(mut self, means: Vec<f64>) -> Result<Self> {
        if !self.base.flags.dsn {
            return Err(Error::InvalidArgument("model was not trained with domain-specific normalization".into()));
        }
        if means.len() != self.base.h() {
            return Err(Error::DimensionMismatch {
                expected: self.base.h(),
                got: means.len(),
            });
        }
        self.target_dsn_means = Some(means);
        Ok(self)
    }

    pub fn context(&self) -> PredictionContext {
        PredictionContext::new(self.target_label_dist.clone(), self.target_dsn_means.clone())
    }

    pub fn predictor(&self) -> Result<Predictor> {
        self.base.predictor(&self.context(), None)
    }

    /// Checks that every input the model's flags require has been supplied.
    pub fn is_complete(&self) -> bool {
        (!self.base.flags.dsb || self.target_label_dist.is_some()) && (!self.base.flags.dsn || self.target_dsn_means.is_some())
    }
}

/// Binds a target label distribution to a DSB model.
pub fn apply_dsb(model: &LinearModel, dist: LabelDistribution) -> Result<AdaptedModel<'_>> {
    AdaptedModel::new(model).with_dsb(dist)
}

impl AdaptedModel<'_> {
    pub fn with_dsb(mut self, dist: LabelDistribution) -> Result<Self> {
        if !self.base.flags.dsb {
            return Err(Error::InvalidArgument("model was not trained with domain-specific bias".into()));
        }
        if dist.k() != self.base.k() {
            return Err(Error::DimensionMismatch {
                expected: self.base.k(),
                got: dist.k(),
            });
        }
        dist.log_probs()?;
        self.target_label_dist = Some(dist);
        Ok(self)
    }
}

/// Presence rate of every vocabulary token over unlabeled target texts.
pub fn compute_dsn_stats<S: AsRef<str>>(texts: &[S], vocab: &Vocabulary, pipeline: &TextPipeline) -> Result<Vec<f64>> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let fvs: Vec<FeatureVector> = texts.iter().map(|t| featurize(&pipeline.tokens(t.as_ref()), vocab)).collect();
    Ok(feature_means(&fvs, vocab.len()))
}

/// Subtracts domain means from a binarized vector. Positions absent from `fv`
/// but with a positive mean get an explicit negative entry.
pub fn apply_dsn(fv: &FeatureVector, means: &[f64]) -> FeatureVector {
    let mut out = Vec::with_capacity(fv.nnz());
    let mut present = fv.entries().iter().peekable();
    for (j, &m) in means.iter().enumerate() {
        let v = match present.peek() {
            Some(&&(p, v)) if p == j => {
                present.next();
                v
            }
            _ => 0.0,
        };
        if v != 0.0 || m > 0.0 {
            out.push((j, v - m));
        }
    }
    FeatureVector::new(fv.dim(), out)
}

/// Settings for [`two_fold_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoFoldOptions {
    pub repeats: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TwoFoldOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            alpha: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoFoldEstimate {
    pub mean: f64,
    /// Population std over repeats.
    pub std: f64,
    pub per_repeat: Vec<f64>,
    /// Distribution estimated from all samples, for predicting on the target.
    pub full_distribution: LabelDistribution,
}

/// Accuracy estimate for a target domain from one labeled sample. Each repeat
/// halves the sample at random, estimates the label distribution on one half,
/// scores the other half under it, swaps roles and averages the two
/// accuracies. Models without DSB simply score each half.
pub fn two_fold_estimate(
    model: &LinearModel,
    samples: &[FeatureVector],
    labels: &[usize],
    dsn_means: Option<Vec<f64>>,
    opts: &TwoFoldOptions,
) -> Result<TwoFoldEstimate> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("two-fold estimation needs at least 2 labeled samples".into()));
    }
    if opts.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let k = model.k();
    let ctx = PredictionContext::new(None, dsn_means);
    let table = model.scorer(&ctx, None)?.score_vectors(samples);
    let n = samples.len();
    let mut per_repeat = Vec::with_capacity(opts.repeats);
    for r in 0..opts.repeats {
        let mut rng = SeededRng::new(derive_seed(opts.seed, tags::TWO_FOLD, r as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let (a, b) = idx.split_at(n / 2);
        let mut acc = 0.0;
        for (est, score) in [(a, b), (b, a)] {
            let prior = if model.flags.dsb {
                let ys: Vec<usize> = est.iter().map(|&i| labels[i]).collect();
                Some(estimate_label_distribution(&ys, k, opts.alpha)?.log_probs()?)
            } else {
                None
            };
            acc += table.accuracy_on(score, labels, prior.as_deref());
        }
        per_repeat.push(acc / 2.0);
    }
    let (mean, std) = mean_std(&per_repeat);
    Ok(TwoFoldEstimate {
        mean,
        std,
        per_repeat,
        full_distribution: estimate_label_distribution(labels, k, opts.alpha)?,
    })
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracy-maximizing decision threshold for `score > threshold`.
/// Candidates are `-inf`, the midpoints between consecutive distinct scores
/// and `+inf`; ties go to the smallest threshold. Returns the threshold and
/// its accuracy.
pub fn tune_threshold(scores: &[f64], positive: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() || scores.len() != positive.len() {
        return Err(Error::InvalidArgument("need equally many scores and labels, at least one".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n = scores.len() as f64;
    // threshold -inf: everything positive
    let mut correct = positive.iter().filter(|&&p| p).count() as i64;
    let mut best = (f64::NEG_INFINITY, correct);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // move every item with this score to the negative side
        while i < order.len() && scores[order[i]] == s {
            correct += if positive[order[i]] { -1 } else { 1 };
            i += 1;
        }
        let t = if i < order.len() { (s + scores[order[i]]) / 2.0 } else { f64::INFINITY };
        if correct > best.1 {
            best = (t, correct);
        }
    }
    Ok((best.0, best.1 as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::classify_with_threshold;
    use proptest::prelude::*;

    #[test]
    fn laplace_formula() {
        let d = estimate_label_distribution(&[0, 0, 0, 1], 3, 1.0).unwrap();
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (p, e) in d.probs.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(d.n_samples_used, 4);
    }

    #[test]
    fn empty_samples() {
        let d = estimate_label_distribution(&[], 4, 1.0).unwrap();
        assert_eq!(d.probs, vec![0.25; 4]);
        assert!(estimate_label_distribution(&[], 4, 0.0).is_err());
    }

    #[test]
    fn unsmoothed_balanced() {
        let mut s = vec![0; 100];
        s.extend(vec![1; 100]);
        assert_eq!(estimate_label_distribution(&s, 2, 0.0).unwrap().probs, vec![0.5, 0.5]);
    }

    #[test]
    fn dsn_examples() {
        let fv = FeatureVector::binary(2, vec![0]);
        assert_eq!(apply_dsn(&fv, &[1.0, 0.0]).entries(), &[(0, 0.0)]);
        let empty = FeatureVector::binary(2, vec![]);
        assert_eq!(apply_dsn(&empty, &[0.25, 0.0]).entries(), &[(0, -0.25)]);
        let fv = FeatureVector::binary(3, vec![0, 2]);
        assert_eq!(apply_dsn(&fv, &[0.0; 3]), fv);
    }

    #[test]
    fn dsn_stats_examples() {
        let v = Vocabulary::from_tokens(vec!["cat".into(), "dog".into(), "fish".into()]).unwrap();
        let means = compute_dsn_stats(&["cat dog", "cat", "cat"], &v, &TextPipeline::default()).unwrap();
        assert_eq!(means[0], 1.0);
        assert!((means[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(means[2], 0.0);
        assert!(compute_dsn_stats::<&str>(&[], &v, &TextPipeline::default()).is_err());
    }

    // oracle: score every candidate threshold directly
    fn brute_force(scores: &[f64], pos: &[bool]) -> f64 {
        let mut sorted: Vec<f64> = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
        cands.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .iter()
            .map(|&t| scores.iter().zip(pos).filter(|(s, p)| classify_with_threshold(**s, t) == **p).count() as f64 / scores.len() as f64)
            .fold(0.0, f64::max)
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(tune_threshold(&[-1.0, 1.0], &[false, true]).unwrap(), (0.0, 1.0));
        let (t, acc) = tune_threshold(&[0.3, -2.0, 5.0], &[true, true, true]).unwrap();
        assert_eq!(t, f64::NEG_INFINITY);
        assert_eq!(acc, 1.0);
        let (t, acc) = tune_threshold(&[1.0, 2.0, 3.0], &[false, true, false]).unwrap();
        assert_eq!(t, 1.5);
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        assert!((acc - brute_force(&[1.0, 2.0, 3.0], &[false, true, false])).abs() < 1e-15);
    }

    #[test]
    fn label_file_reorders() {
        let f = LabelDistributionFile {
            labels: vec!["pos".into(), "neg".into()],
            probs: vec![0.8, 0.2],
            n_samples_used: 10,
            alpha: 1.0,
        };
        let d = f.to_distribution(&["neg".into(), "pos".into()]).unwrap();
        assert_eq!(d.probs, vec![0.2, 0.8]);
        assert!(f.to_distribution(&["neg".into(), "meh".into()]).is_err());
    }

    proptest! {
        #[test]
        fn threshold_matches_brute_force(data in prop::collection::vec((-5i32..5, any::<bool>()), 1..30)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 2.0).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            let (t, acc) = tune_threshold(&scores, &pos).unwrap();
            let achieved = scores.iter().zip(&pos).filter(|(s, p)| classify_with_threshold(**s, t) == **p).count() as f64 / scores.len() as f64;
            prop_assert!((acc - achieved).abs() < 1e-12);
            prop_assert!((acc - brute_force(&scores, &pos)).abs() < 1e-12);
        }

        #[test]
        fn smoothed_estimates_are_positive(samples in prop::collection::vec(0usize..5, 0..50), alpha in 0.01f64..3.0) {
            let d = estimate_label_distribution(&samples, 5, alpha).unwrap();
            prop_assert!(d.probs.iter().all(|&p| p > 0.0));
            prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn dsn_output_in_range(bits in prop::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let means: Vec<f64> = bits.iter().map(|_| rng.unit()).collect();
            let fv = FeatureVector::binary(bits.len(), bits.iter().enumerate().filter(|b| *b.1).map(|b| b.0).collect());
            for &(_, v) in apply_dsn(&fv, &means).entries() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}

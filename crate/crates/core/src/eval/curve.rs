use serde::{Deserialize, Serialize};

use crate::adapt::{estimate_label_distribution, mean_std};
use crate::corpus::FeatureVector;
use crate::error::{Error, Result};
use crate::model::{LinearModel, PredictionContext};
use crate::rng::{derive_seed, tags, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            sample_sizes: vec![10, 25, 50, 100, 250, 500, 1000],
            trials: 5,
            alpha: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub mean: f64,
    /// Population std over trials.
    pub std: f64,
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelPropCurve {
    pub points: Vec<CurvePoint>,
    /// Accuracy with the distribution of every target label.
    pub oracle_accuracy: f64,
}

/// DSB accuracy on the whole target set as a function of how many labeled
/// target samples the distribution is estimated from.
pub fn labelprop_curve(
    model: &LinearModel,
    target: &[FeatureVector],
    labels: &[usize],
    dsn_means: Option<Vec<f64>>,
    opts: &CurveOptions,
) -> Result<LabelPropCurve> {
    if !model.flags.dsb {
        return Err(Error::InvalidArgument("label-distribution curves need a model trained with domain-specific bias".into()));
    }
    if target.len() != labels.len() || target.is_empty() {
        return Err(Error::InvalidArgument("need a non-empty target with one label per document".into()));
    }
    if opts.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = labels.len();
    let k = model.k();
    let table = model
        .scorer(&PredictionContext::new(None, dsn_means), None)?
        .score_vectors(target);
    let all: Vec<usize> = (0..n).collect();
    let oracle = estimate_label_distribution(labels, k, opts.alpha)?.log_probs()?;
    let oracle_accuracy = table.accuracy_on(&all, labels, Some(&oracle));
    let points = opts
        .sample_sizes
        .iter()
        .map(|&size| {
            if size > n {
                return Err(Error::InvalidArgument(format!("sample size {size} exceeds the {n} target documents")));
            }
            let accuracies = (0..opts.trials)
                .map(|t| {
                    let seed = derive_seed(derive_seed(opts.seed, tags::CURVE, size as u64), 0, t as u64);
                    let sample = SeededRng::new(seed).sample_indices(n, size);
                    let ys: Vec<usize> = sample.iter().map(|&i| labels[i]).collect();
                    let prior = estimate_label_distribution(&ys, k, opts.alpha)?.log_probs()?;
                    Ok(table.accuracy_on(&all, labels, Some(&prior)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&accuracies);
            Ok(CurvePoint {
                size,
                mean,
                std,
                accuracies,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LabelPropCurve { points, oracle_accuracy })
}

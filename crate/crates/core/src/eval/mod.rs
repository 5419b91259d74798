//! Accuracy reports, the held-out-domain, single-domain and in/out-of-domain
//! protocols, label-distribution curves, McNemar's test and power analysis.

mod curve;
mod protocols;
mod report;
mod stats;

use serde::{Deserialize, Serialize};

use crate::adapt::mean_std;
use crate::error::{Error, Result};

pub use curve::{labelprop_curve, CurveOptions, CurvePoint, LabelPropCurve};
pub use protocols::{
    holdout_domain_protocol, in_vs_out_report, single_domain_protocol, HoldoutOutcome, InVsOutReport, InVsOutRow,
    LeakageAudit, ProtocolOptions, TrainedFor,
};
pub use report::Table;
pub use stats::{
    mcnemar_chi2, mcnemar_exact, mcnemar_test, power_analysis, CellProbabilities, PairedOutcome, PowerOptions,
    PowerResult, EXACT_LIMIT,
};

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::DimensionMismatch {
            expected: golds.len(),
            got: predictions.len(),
        });
    }
    if golds.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    Ok(predictions.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / golds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub domain: String,
    pub accuracy: f64,
    pub n: usize,
    /// Accuracy minus the baseline row's accuracy on the same domain.
    pub improvement: Option<f64>,
}

/// One row of a protocol report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    /// Mean of the per-domain accuracies.
    pub accuracy: f64,
    pub per_domain: Vec<DomainAccuracy>,
    pub baseline: Option<String>,
    pub mean_improvement: Option<f64>,
    /// Population std across domains of the improvement over the baseline.
    pub sigma_delta: Option<f64>,
}

impl EvalReport {
    pub fn new(config: impl Into<String>, per_domain: Vec<DomainAccuracy>) -> Self {
        let accs: Vec<f64> = per_domain.iter().map(|d| d.accuracy).collect();
        Self {
            config: config.into(),
            accuracy: mean_std(&accs).0,
            per_domain,
            baseline: None,
            mean_improvement: None,
            sigma_delta: None,
        }
    }

    pub fn accuracy_on(&self, domain: &str) -> Option<f64> {
        self.per_domain.iter().find(|d| d.domain == domain).map(|d| d.accuracy)
    }
}

/// Fills improvements and sigma_delta against the row named `baseline`, or
/// the first row when no such row exists.
pub fn attach_baseline(reports: &mut [EvalReport], baseline: &str) {
    let Some(base_idx) = reports.iter().position(|r| r.config == baseline).or(if reports.is_empty() { None } else { Some(0) }) else {
        return;
    };
    let base = reports[base_idx].clone();
    for r in reports.iter_mut() {
        let mut deltas = Vec::new();
        for d in r.per_domain.iter_mut() {
            if let Some(b) = base.accuracy_on(&d.domain) {
                d.improvement = Some(d.accuracy - b);
                deltas.push(d.accuracy - b);
            }
        }
        let (mean, std) = mean_std(&deltas);
        r.baseline = Some(base.config.clone());
        r.mean_improvement = Some(mean);
        r.sigma_delta = Some(std);
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, tags, SeededRng};

/// Paired correctness counts of two classifiers on the same items. `n01`
/// counts items where A is wrong and B is right.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl PairedOutcome {
    pub fn from_predictions(pred_a: &[usize], pred_b: &[usize], golds: &[usize]) -> Result<Self> {
        if pred_a.len() != golds.len() || pred_b.len() != golds.len() {
            return Err(Error::DimensionMismatch {
                expected: golds.len(),
                got: if pred_a.len() != golds.len() { pred_a.len() } else { pred_b.len() },
            });
        }
        let mut t = Self::default();
        for ((a, b), g) in pred_a.iter().zip(pred_b).zip(golds) {
            match (a == g, b == g) {
                (false, false) => t.n00 += 1,
                (false, true) => t.n01 += 1,
                (true, false) => t.n10 += 1,
                (true, true) => t.n11 += 1,
            }
        }
        Ok(t)
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn discordant(&self) -> u64 {
        self.n01 + self.n10
    }

    pub fn agreement(&self) -> f64 {
        (self.n00 + self.n11) as f64 / self.total() as f64
    }
}

/// Discordant count up to which the exact binomial test is used.
pub const EXACT_LIMIT: u64 = 25;

/// Two-sided exact binomial p-value on the discordant pairs, capped at 1.
pub fn mcnemar_exact(n01: u64, n10: u64) -> f64 {
    let n = n01 + n10;
    if n == 0 {
        return 1.0;
    }
    let tail = Binomial::new(0.5, n).expect("valid binomial").cdf(n01.min(n10));
    (2.0 * tail).min(1.0)
}

/// Chi-square (1 df) p-value with continuity correction.
pub fn mcnemar_chi2(n01: u64, n10: u64) -> f64 {
    let n = n01 + n10;
    if n == 0 {
        return 1.0;
    }
    let diff = (n01 as f64 - n10 as f64).abs() - 1.0;
    let stat = diff.max(0.0).powi(2) / n as f64;
    ChiSquared::new(1.0).expect("valid chi-square").sf(stat)
}

/// McNemar's test: exact below [`EXACT_LIMIT`] discordant pairs, chi-square
/// with continuity correction above.
pub fn mcnemar_test(t: &PairedOutcome) -> f64 {
    if t.discordant() <= EXACT_LIMIT {
        mcnemar_exact(t.n01, t.n10)
    } else {
        mcnemar_chi2(t.n01, t.n10)
    }
}

/// Joint correctness probabilities of two classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellProbabilities {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

impl CellProbabilities {
    /// Solves the 2x2 table from marginal accuracies and agreement rate.
    pub fn solve(acc_a: f64, acc_b: f64, agreement: f64) -> Result<Self> {
        for (name, v) in [("acc_a", acc_a), ("acc_b", acc_b), ("agreement", agreement)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Infeasible(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let p11 = (acc_a + acc_b - 1.0 + agreement) / 2.0;
        let cells = Self {
            p11,
            p10: acc_a - p11,
            p01: acc_b - p11,
            p00: 1.0 - acc_a - acc_b + p11,
        };
        for (name, v) in [("p11", cells.p11), ("p10", cells.p10), ("p01", cells.p01), ("p00", cells.p00)] {
            if v < -1e-12 {
                return Err(Error::Infeasible(format!(
                    "cell {name} = {v:.6} is negative for acc_a={acc_a}, acc_b={acc_b}, agreement={agreement}"
                )));
            }
        }
        Ok(Self {
            p11: cells.p11.max(0.0),
            p10: cells.p10.max(0.0),
            p01: cells.p01.max(0.0),
            p00: cells.p00.max(0.0),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub n_test: usize,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            n_test: 1000,
            alpha: 0.05,
            trials: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub power: f64,
    pub cells: CellProbabilities,
    pub trials: usize,
}

/// Monte-Carlo power of McNemar's test: the fraction of simulated paired
/// tables of size `n_test` with p-value below `alpha`.
pub fn power_analysis(acc_a: f64, acc_b: f64, agreement: f64, opts: &PowerOptions) -> Result<PowerResult> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    if opts.trials == 0 || opts.n_test == 0 {
        return Err(Error::InvalidArgument("trials and n_test must be positive".into()));
    }
    let cells = CellProbabilities::solve(acc_a, acc_b, agreement)?;
    // only the discordant cells matter to the test
    let (c01, c10) = (cells.p01, cells.p01 + cells.p10);
    let hits: usize = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::new(derive_seed(opts.seed, tags::POWER, t as u64));
            let mut table = PairedOutcome::default();
            for _ in 0..opts.n_test {
                let u = rng.unit();
                if u < c01 {
                    table.n01 += 1;
                } else if u < c10 {
                    table.n10 += 1;
                }
            }
            usize::from(mcnemar_test(&table) < opts.alpha)
        })
        .sum();
    Ok(PowerResult {
        power: hits as f64 / opts.trials as f64,
        cells,
        trials: opts.trials,
    })
}

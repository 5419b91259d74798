use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{attach_baseline, DomainAccuracy, EvalReport};
use crate::adapt::{compute_dsn_stats, estimate_label_distribution, mean_std};
use crate::corpus::{featurize, split_dataset, Corpus, FeatureVector, SplitSpec, TextPipeline};
use crate::error::{Error, Result};
use crate::model::{LinearModel, LogitTable, PredictionContext};
use crate::rng::{derive_seed, tags, SeededRng};
use crate::train::{fit, GridSearch, TrainConfig, TrainingSet};

/// Shared settings of the evaluation protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    /// Per-domain train/test carving.
    pub split: SplitSpec,
    /// Lambda search; `None` trains every config with its own lambda.
    pub search: Option<GridSearch>,
    /// Label budgets for estimated-distribution DSB rows.
    pub n_est: Vec<usize>,
    /// Random draws per budget.
    pub est_trials: usize,
    /// Smoothing for every estimated or oracle label distribution.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::count(400, 0),
            search: Some(GridSearch::default()),
            n_est: vec![250],
            est_trials: 5,
            alpha: 1.0,
            seed: 0,
        }
    }
}

/// Id-set bookkeeping for one held-out domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub held_out: String,
    pub n_test: usize,
    pub n_train: usize,
    pub n_estimation: usize,
    /// Test ids found among training ids.
    pub train_overlap: usize,
    /// Test ids found among label-estimation samples.
    pub estimation_overlap: usize,
}

/// A model trained inside a protocol run.
#[derive(Clone, Debug)]
pub struct TrainedFor {
    pub config: String,
    pub held_out: String,
    pub lambda: f64,
    pub model: LinearModel,
}

#[derive(Clone, Debug, Serialize)]
pub struct HoldoutOutcome {
    pub reports: Vec<EvalReport>,
    pub audit: Vec<LeakageAudit>,
    #[serde(skip)]
    pub models: Vec<TrainedFor>,
}

impl HoldoutOutcome {
    pub fn report(&self, name: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.config == name)
    }

    pub fn model(&self, config: &str, held_out: &str) -> Option<&LinearModel> {
        self.models
            .iter()
            .find(|m| m.config == config && m.held_out == held_out)
            .map(|m| &m.model)
    }
}

pub(crate) fn row_name(config: &TrainConfig, suffix: Option<&str>) -> String {
    match suffix {
        Some(s) => format!("LogReg {}({s})", config.name()),
        None => format!("LogReg {}", config.name()),
    }
}

pub(crate) const BASELINE: &str = "LogReg Base";

fn row_names(config: &TrainConfig, n_est: &[usize]) -> Vec<String> {
    if config.dsb {
        let mut out = vec![row_name(config, Some("oracle"))];
        out.extend(n_est.iter().map(|n| row_name(config, Some(&n.to_string()))));
        out
    } else {
        vec![row_name(config, None)]
    }
}

fn pipeline_for(config: &TrainConfig) -> TextPipeline {
    TextPipeline {
        tweet_mode: config.tweet_mode,
    }
}

fn texts(c: &Corpus) -> Vec<&str> {
    c.documents().iter().map(|d| d.raw_text.as_str()).collect()
}

fn featurize_all(c: &Corpus, model: &LinearModel) -> Vec<FeatureVector> {
    c.documents()
        .iter()
        .map(|d| featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab))
        .collect()
}

/// Unlabeled-target and labeled-sample views of one evaluation domain.
struct Target<'a> {
    /// Labeled documents the consumer may sample from and read text of.
    pool: Corpus,
    /// Documents scored.
    test: Corpus,
    /// Labels defining the oracle distribution.
    oracle_labels: Vec<usize>,
    domain_index: usize,
    opts: &'a ProtocolOptions,
}

impl Target<'_> {
    /// Positions into `pool` for each (budget, trial), shared across configs.
    fn estimation_draws(&self) -> Result<Vec<Vec<Vec<usize>>>> {
        self.opts
            .n_est
            .iter()
            .map(|&n| {
                if n > self.pool.len() {
                    return Err(Error::InvalidArgument(format!(
                        "label budget {n} exceeds the {} available samples",
                        self.pool.len()
                    )));
                }
                Ok((0..self.opts.est_trials)
                    .map(|t| {
                        let seed = derive_seed(
                            derive_seed(self.opts.seed, tags::ESTIMATE, self.domain_index as u64),
                            n as u64,
                            t as u64,
                        );
                        SeededRng::new(seed).sample_indices(self.pool.len(), n)
                    })
                    .collect())
            })
            .collect()
    }

    /// `(hits, total)` per row of `config`.
    fn score(&self, model: &LinearModel, config: &TrainConfig, draws: &[Vec<Vec<usize>>]) -> Result<Vec<(f64, usize)>> {
        let dsn = if config.dsn {
            Some(compute_dsn_stats(&texts(&self.pool), &model.vocab, &model.pipeline)?)
        } else {
            None
        };
        let table: LogitTable = model
            .scorer(&PredictionContext::new(None, dsn), None)?
            .score_vectors(&featurize_all(&self.test, model));
        let golds = self.test.gold_labels()?;
        let all: Vec<usize> = (0..golds.len()).collect();
        let n = golds.len();
        let hits = |prior: Option<&[f64]>| table.accuracy_on(&all, &golds, prior) * n as f64;
        if !config.dsb {
            return Ok(vec![(hits(None), n)]);
        }
        let k = model.k();
        let oracle = estimate_label_distribution(&self.oracle_labels, k, self.opts.alpha)?.log_probs()?;
        let pool_labels = self.pool.gold_labels()?;
        let mut out = vec![(hits(Some(&oracle)), n)];
        for trials in draws {
            let mut total = 0.0;
            for sample in trials {
                let ys: Vec<usize> = sample.iter().map(|&i| pool_labels[i]).collect();
                let prior = estimate_label_distribution(&ys, k, self.opts.alpha)?.log_probs()?;
                total += hits(Some(&prior));
            }
            out.push((total / trials.len().max(1) as f64, n));
        }
        Ok(out)
    }

    fn estimation_ids(&self, draws: &[Vec<Vec<usize>>]) -> BTreeSet<&str> {
        draws
            .iter()
            .flatten()
            .flatten()
            .map(|&i| self.pool.documents()[i].id.as_str())
            .collect()
    }
}

fn train_on(source: &Corpus, config: &TrainConfig, search: Option<&GridSearch>) -> Result<(LinearModel, f64)> {
    let data = TrainingSet::build(source, config.vocab_size, pipeline_for(config))?;
    let out = fit(&data, config, search)?;
    let lambda = out.search.map_or(config.lambda, |s| s.best_lambda);
    Ok((out.trained.model, lambda))
}

struct DomainRun {
    rows: Vec<(f64, usize)>,
    audit: LeakageAudit,
    models: Vec<TrainedFor>,
}

/// Holds out each domain in turn: trains every config on the train splits of
/// the remaining domains (with lambda search) and scores the held-out test
/// split. DSB configs report the oracle distribution (all labels of the
/// held-out domain) and each estimation budget (samples from the held-out
/// train split, averaged over trials). DSN means come from the held-out train
/// split text.
pub fn holdout_domain_protocol(corpus: &Corpus, configs: &[TrainConfig], opts: &ProtocolOptions) -> Result<HoldoutOutcome> {
    if corpus.domains().len() < 2 {
        return Err(Error::InvalidArgument("the held-out-domain protocol needs at least 2 domains".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let (train, test) = split_dataset(corpus, &opts.split)?;
    let runs: Vec<DomainRun> = corpus
        .domains()
        .par_iter()
        .enumerate()
        .map(|(di, held)| {
            let source = train.filter_domains(|d| d != held);
            let target = Target {
                pool: train.filter_domains(|d| d == held),
                test: test.filter_domains(|d| d == held),
                oracle_labels: corpus.subset(&corpus.domain_positions(held)).gold_labels()?,
                domain_index: di,
                opts,
            };
            let draws = target.estimation_draws()?;
            let mut rows = Vec::new();
            let mut models = Vec::new();
            for config in configs {
                let (model, lambda) = train_on(&source, config, opts.search.as_ref())?;
                rows.extend(target.score(&model, config, &draws)?);
                models.push(TrainedFor {
                    config: config.name(),
                    held_out: held.clone(),
                    lambda,
                    model,
                });
            }
            let test_ids: BTreeSet<&str> = target.test.documents().iter().map(|d| d.id.as_str()).collect();
            let train_ids: BTreeSet<&str> = source.documents().iter().map(|d| d.id.as_str()).collect();
            let est_ids = target.estimation_ids(&draws);
            let audit = LeakageAudit {
                held_out: held.clone(),
                n_test: test_ids.len(),
                n_train: train_ids.len(),
                n_estimation: est_ids.len(),
                train_overlap: test_ids.intersection(&train_ids).count(),
                estimation_overlap: test_ids.intersection(&est_ids).count(),
            };
            Ok(DomainRun { rows, audit, models })
        })
        .collect::<Result<_>>()?;

    let names: Vec<String> = configs.iter().flat_map(|c| row_names(c, &opts.n_est)).collect();
    let mut reports: Vec<EvalReport> = names
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let per_domain = corpus
                .domains()
                .iter()
                .zip(&runs)
                .map(|(d, run)| DomainAccuracy {
                    domain: d.clone(),
                    accuracy: run.rows[r].0 / run.rows[r].1 as f64,
                    n: run.rows[r].1,
                    improvement: None,
                })
                .collect();
            EvalReport::new(name.clone(), per_domain)
        })
        .collect();
    attach_baseline(&mut reports, BASELINE);
    let mut audit = Vec::new();
    let mut models = Vec::new();
    for run in runs {
        audit.push(run.audit);
        models.extend(run.models);
    }
    Ok(HoldoutOutcome { reports, audit, models })
}

/// Trains on one domain at a time and scores the union of the other domains'
/// test splits; each target document is adapted with its own domain's
/// distribution and feature means.
pub fn single_domain_protocol(corpus: &Corpus, configs: &[TrainConfig], opts: &ProtocolOptions) -> Result<Vec<EvalReport>> {
    if corpus.domains().len() < 2 {
        return Err(Error::InvalidArgument("the single-domain protocol needs at least 2 domains".into()));
    }
    for c in configs {
        c.validate()?;
        if c.technique == crate::train::Technique::Gr {
            log::warn!("{}: a single training domain leaves nothing to deconfound", c.name());
        }
    }
    let (train, test) = split_dataset(corpus, &opts.split)?;
    let targets: Vec<Target> = corpus
        .domains()
        .iter()
        .enumerate()
        .map(|(di, d)| {
            Ok(Target {
                pool: train.filter_domains(|x| x == d),
                test: test.filter_domains(|x| x == d),
                oracle_labels: corpus.subset(&corpus.domain_positions(d)).gold_labels()?,
                domain_index: di,
                opts,
            })
        })
        .collect::<Result<_>>()?;
    let draws: Vec<_> = targets.iter().map(Target::estimation_draws).collect::<Result<_>>()?;
    let runs: Vec<Vec<(f64, usize)>> = corpus
        .domains()
        .par_iter()
        .map(|src| {
            let source = train.filter_domains(|d| d == src);
            let mut rows = Vec::new();
            for config in configs {
                let (model, _) = train_on(&source, config, opts.search.as_ref())?;
                let mut sums: Vec<(f64, usize)> = Vec::new();
                for (t, target) in targets.iter().enumerate() {
                    if corpus.domains()[t] == *src {
                        continue;
                    }
                    let scored = target.score(&model, config, &draws[t])?;
                    if sums.is_empty() {
                        sums = vec![(0.0, 0); scored.len()];
                    }
                    for (s, (h, n)) in sums.iter_mut().zip(scored) {
                        s.0 += h;
                        s.1 += n;
                    }
                }
                rows.extend(sums);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let names: Vec<String> = configs.iter().flat_map(|c| row_names(c, &opts.n_est)).collect();
    let mut reports: Vec<EvalReport> = names
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let per_domain = corpus
                .domains()
                .iter()
                .zip(&runs)
                .map(|(d, rows)| DomainAccuracy {
                    domain: d.clone(),
                    accuracy: rows[r].0 / rows[r].1 as f64,
                    n: rows[r].1,
                    improvement: None,
                })
                .collect();
            EvalReport::new(name.clone(), per_domain)
        })
        .collect();
    attach_baseline(&mut reports, BASELINE);
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InVsOutRow {
    pub domain: String,
    pub in_domain: f64,
    pub out_of_domain: f64,
    pub drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InVsOutReport {
    pub config: String,
    pub rows: Vec<InVsOutRow>,
    pub mean_in_domain: f64,
    pub mean_out_of_domain: f64,
    /// Population std of the per-domain drops.
    pub sigma_delta: f64,
}

/// In-domain accuracy (trained on every domain's train split, scored per test
/// split with the producer's own statistics) against held-out-domain
/// accuracy for the same config.
pub fn in_vs_out_report(corpus: &Corpus, config: &TrainConfig, opts: &ProtocolOptions) -> Result<InVsOutReport> {
    let (train, test) = split_dataset(corpus, &opts.split)?;
    let (model, _) = train_on(&train, config, opts.search.as_ref())?;
    let holdout_opts = ProtocolOptions {
        n_est: Vec::new(),
        ..opts.clone()
    };
    let ood = holdout_domain_protocol(corpus, std::slice::from_ref(config), &holdout_opts)?;
    let ood_row = &ood.reports[0];
    let mut rows = Vec::new();
    for d in corpus.domains() {
        let target = test.filter_domains(|x| x == d);
        let predictor = model.predictor(&PredictionContext::default(), Some(d))?;
        let golds = target.gold_labels()?;
        let preds: Vec<usize> = featurize_all(&target, &model).iter().map(|fv| predictor.predict(fv)).collect();
        let in_domain = super::accuracy(&preds, &golds)?;
        let out_of_domain = ood_row.accuracy_on(d).expect("every domain held out");
        rows.push(InVsOutRow {
            domain: d.clone(),
            in_domain,
            out_of_domain,
            drop: in_domain - out_of_domain,
        });
    }
    let drops: Vec<f64> = rows.iter().map(|r| r.drop).collect();
    Ok(InVsOutReport {
        config: ood_row.config.clone(),
        mean_in_domain: mean_std(&rows.iter().map(|r| r.in_domain).collect::<Vec<_>>()).0,
        mean_out_of_domain: mean_std(&rows.iter().map(|r| r.out_of_domain).collect::<Vec<_>>()).0,
        sigma_delta: mean_std(&drops).1,
        rows,
    })
}

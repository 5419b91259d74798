use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::objective::{forward, Frozen, Gradients, LossBreakdown, Params};
use super::{Technique, TrainConfig, TrainingSet};
use crate::corpus::stopwords_sha256;
use crate::error::{Error, Result};
use crate::model::{Flags, GrHead, LinearModel, Provenance, Weights, FORMAT_VERSION};
use crate::rng::{derive_seed, tags, SeededRng};

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub label_ce: f64,
    pub domain_ce: f64,
    pub l1_penalty: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: LinearModel,
    pub loss: LossBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<LogEntry>,
}

/// Smallest step size tried before giving up on a descent direction.
const MIN_LR: f64 = 1e-30;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn descend(x: &Array2<f64>, g: &Array2<f64>, lr: f64, shrink: f64) -> Array2<f64> {
    let mut out = x.clone();
    Zip::from(&mut out).and(g).for_each(|o, &gv| *o = soft_threshold(*o - lr * gv, shrink));
    out
}

fn plain(x: &Array1<f64>, g: &Array1<f64>, lr: f64) -> Array1<f64> {
    x - &(g * lr)
}

/// Which parameters a step moves.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    All,
    /// Only the GR domain head.
    Head,
    /// Everything except the GR domain head.
    Rest,
}

fn step(p: &Params, g: &Gradients, lr: f64, lambda: f64) -> Params {
    step_part(p, g, lr, lambda, Part::All)
}

fn step_part(p: &Params, g: &Gradients, lr: f64, lambda: f64, part: Part) -> Params {
    let shrink = lr * lambda;
    let (head, rest) = (part != Part::Rest, part != Part::Head);
    let weights = match (&p.weights, &g.weights) {
        (Weights::Dense(w), Weights::Dense(gw)) => Weights::Dense(if rest { descend(w, gw, lr, shrink) } else { w.clone() }),
        (
            Weights::Factorized { w1, w2, gr_head },
            Weights::Factorized {
                w1: g1,
                w2: g2,
                gr_head: gh,
            },
        ) => Weights::Factorized {
            w1: if rest { descend(w1, g1, lr, shrink) } else { w1.clone() },
            w2: if rest { descend(w2, g2, lr, shrink) } else { w2.clone() },
            gr_head: if head {
                GrHead {
                    weights: &gr_head.weights - &(&gh.weights * lr),
                    bias: plain(&gr_head.bias, &gh.bias, lr),
                }
            } else {
                gr_head.clone()
            },
        },
        _ => panic!("gradient layout differs from parameters"),
    };
    if !rest {
        return Params { weights, ..p.clone() };
    }
    Params {
        weights,
        bias: plain(&p.bias, &g.bias, lr),
        dr: p.dr.as_ref().map(|d| d - &(g.dr_bias_table.as_ref().expect("dr gradient") * lr)),
    }
}

/// One proximal-gradient update: a plain gradient step on every parameter,
/// then soft-thresholding of the weight-matrix entries by `lr * lambda`.
pub fn proximal_step(model: &LinearModel, grads: &Gradients, lr: f64, lambda: f64) -> LinearModel {
    let p = step(&Params::of(model), grads, lr, lambda);
    let mut out = model.clone();
    out.weights = p.weights;
    out.bias = p.bias;
    out.dr_bias_table = p.dr;
    out
}

/// The zero-initialized model (random `W1` for GR) carrying vocabulary,
/// domain statistics and provenance.
pub(crate) fn initial_model(data: &TrainingSet, config: &TrainConfig) -> Result<LinearModel> {
    let (h, k, nd) = (data.vocab.len(), data.k(), data.domains.len());
    let weights = match config.technique {
        Technique::Gr => {
            let r = config.rank.unwrap_or(k.max(16));
            let mut rng = SeededRng::new(derive_seed(config.seed, tags::INIT, 0));
            Weights::Factorized {
                w1: Array2::from_shape_simple_fn((h, r), || rng.uniform(-0.01, 0.01)),
                w2: Array2::zeros((r, k)),
                gr_head: GrHead {
                    weights: Array2::zeros((r, nd)),
                    bias: Array1::zeros(nd),
                },
            }
        }
        _ => Weights::Dense(Array2::zeros((h, k))),
    };
    let flags = Flags {
        dsb: config.dsb,
        dsn: config.dsn,
    };
    let domain_stats = if flags.dsb || flags.dsn {
        data.domain_stats(config.stats_alpha)?
    } else {
        Vec::new()
    };
    Ok(LinearModel {
        labels: data.labels.clone(),
        domains: data.domains.clone(),
        vocab: data.vocab.clone(),
        pipeline: data.pipeline,
        weights,
        bias: Array1::zeros(k),
        dr_bias_table: (config.technique == Technique::Dr).then(|| Array2::zeros((nd, k))),
        flags,
        domain_stats,
        provenance: Provenance {
            format_version: FORMAT_VERSION,
            config_digest: config.digest(),
            stopwords_sha256: stopwords_sha256(),
            lambda: config.lambda,
            seed: config.seed,
        },
    })
}

/// Proximal gradient descent with step halving on objective increase.
///
/// GR updates descend on the label loss and ascend on the domain loss
/// through `W1`, so no objective decreases monotonically. There each
/// iteration first moves the domain head, then everything else against the
/// updated head, and the step is only halved when the objective stops being
/// finite.
pub fn train_full_batch(data: &TrainingSet, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.technique == Technique::Gr && data.domains.len() < 2 {
        log::warn!("gradient reversal with a single training domain: the domain loss is constant and nothing is deconfounded");
    }
    let mut model = initial_model(data, config)?;
    let fz = Frozen::from_config(&model, data, config)?;
    let adversarial = config.technique == Technique::Gr;
    let mut p = Params::of(&model);
    let mut fwd = forward(&p, &fz);
    if !fwd.loss.total.is_finite() {
        return Err(Error::Diverged { iter: 0 });
    }
    let mut lr = config.learning_rate;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        let prev = fwd.loss.total;
        let (base, g) = if adversarial {
            let moved = step_part(&p, &fwd.gradients(&p, &fz), lr, 0.0, Part::Head);
            let g = forward(&moved, &fz).gradients(&moved, &fz);
            (moved, g)
        } else {
            (p.clone(), fwd.gradients(&p, &fz))
        };
        let part = if adversarial { Part::Rest } else { Part::All };
        let accepted = loop {
            let cand = step_part(&base, &g, lr, config.lambda, part);
            let cf = forward(&cand, &fz);
            let obj = cf.loss.total;
            if obj.is_finite() && (adversarial || obj <= prev) {
                break Some((cand, cf, obj));
            }
            lr *= 0.5;
            if lr < MIN_LR {
                if !obj.is_finite() {
                    return Err(Error::Diverged { iter });
                }
                break None;
            }
        };
        iterations = iter;
        let Some((cand, cf, obj)) = accepted else {
            converged = true;
            break;
        };
        p = cand;
        fwd = cf;
        let l = fwd.loss;
        history.push(LogEntry {
            iter,
            label_ce: l.label_ce,
            domain_ce: l.domain_ce,
            l1_penalty: l.l1_penalty,
            total: l.total,
            lr,
        });
        if (prev - obj).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    log::debug!("{}: {} iterations, loss {:.6}", config.name(), iterations, fwd.loss.total);
    let loss = fwd.loss;
    drop(fz);
    model.weights = p.weights;
    model.bias = p.bias;
    model.dr_bias_table = p.dr;
    Ok(TrainedModel {
        model,
        loss,
        iterations,
        converged,
        history,
    })
}

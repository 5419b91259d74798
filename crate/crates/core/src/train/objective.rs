use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::model::{log_probs, GrHead, LinearModel, Weights};

/// Components of the training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub label_ce: f64,
    pub domain_ce: f64,
    pub l1_penalty: f64,
    pub total: f64,
}

/// `-ln proba[y]`, with the probability clamped to at least 1e-12.
pub fn cross_entropy(proba: &[f64], y: usize) -> f64 {
    -proba[y].max(1e-12).ln()
}

/// Gradient of the smooth objective, laid out like the model parameters. For
/// factorized weights the `gr_head` slot holds the domain-head gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Weights,
    pub bias: Array1<f64>,
    pub dr_bias_table: Option<Array2<f64>>,
}

/// The trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Params {
    pub weights: Weights,
    pub bias: Array1<f64>,
    pub dr: Option<Array2<f64>>,
}

impl Params {
    pub fn of(model: &LinearModel) -> Self {
        Self {
            weights: model.weights.clone(),
            bias: model.bias.clone(),
            dr: model.dr_bias_table.clone(),
        }
    }

    pub fn l1(&self) -> f64 {
        match &self.weights {
            Weights::Dense(w) => w.iter().map(|v| v.abs()).sum(),
            Weights::Factorized { w1, w2, .. } => w1.iter().chain(w2).map(|v| v.abs()).sum(),
        }
    }
}

/// Everything the objective needs besides parameters: per-row model domain
/// index, fixed per-domain DSB/DSN inputs and the loss weights.
pub(crate) struct Frozen<'a> {
    pub data: &'a TrainingSet,
    pub dom: Vec<Option<usize>>,
    pub n_domains: usize,
    pub log_priors: Option<Vec<Vec<f64>>>,
    pub means: Option<Vec<&'a [f64]>>,
    pub gr_weight: f64,
    pub lambda: f64,
}

impl<'a> Frozen<'a> {
    pub fn new(model: &'a LinearModel, data: &'a TrainingSet, gr_weight: f64, lambda: f64) -> Result<Self> {
        let dom: Vec<Option<usize>> = data.domains.iter().map(|d| model.domain_index(d)).collect();
        let dom: Vec<Option<usize>> = data.domain_of.iter().map(|&d| dom[d]).collect();
        let needs_domain = model.flags.dsb || model.flags.dsn || model.uses_gr();
        if needs_domain {
            if let Some(i) = dom.iter().position(Option::is_none) {
                return Err(Error::InvalidArgument(format!(
                    "instance {} belongs to a domain the model was not trained on",
                    data.ids[i]
                )));
            }
        }
        let stats = |d: &str| model.stats_for(d).ok_or(Error::MissingLabelDistribution);
        let log_priors = if model.flags.dsb {
            Some(
                model
                    .domains
                    .iter()
                    .map(|d| log_probs(&stats(d)?.label_dist.probs))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let means = if model.flags.dsn {
            Some(
                model
                    .domains
                    .iter()
                    .map(|d| {
                        model
                            .stats_for(d)
                            .map(|s| s.feature_means.as_slice())
                            .ok_or(Error::MissingFeatureMeans)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            data,
            dom,
            n_domains: model.domains.len(),
            log_priors,
            means,
            gr_weight,
            lambda,
        })
    }

    pub fn from_config(model: &'a LinearModel, data: &'a TrainingSet, config: &TrainConfig) -> Result<Self> {
        Self::new(model, data, config.gr_weight, config.lambda)
    }

    fn n(&self) -> usize {
        self.data.rows.n_rows()
    }
}

/// Cached activations of one forward pass over the training rows.
pub(crate) struct Forward {
    k: usize,
    r: usize,
    nd: usize,
    /// `n x k` label logits
    z: Vec<f64>,
    /// `n x r` factorized representation (empty for dense weights)
    e: Vec<f64>,
    /// `n x |D|` domain logits (empty unless GR)
    s: Vec<f64>,
    /// softmax of `z`, filled with the loss
    probs: Vec<f64>,
    /// softmax of `s`
    dom_probs: Vec<f64>,
    pub loss: LossBreakdown,
}

fn row<'m>(m: &'m [f64], width: usize, i: usize) -> &'m [f64] {
    &m[i * width..(i + 1) * width]
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// `acc += sum_j M[j]` over the listed rows of a row-major matrix whose
/// width is `acc.len()`.
fn gather_rows(acc: &mut [f64], m: &[f64], cols: &[u32]) {
    match acc.len() {
        2 => gather_fixed::<2>(acc, m, cols),
        3 => gather_fixed::<3>(acc, m, cols),
        4 => gather_fixed::<4>(acc, m, cols),
        w => {
            for &j in cols {
                add_into(acc, row(m, w, j as usize));
            }
        }
    }
}

fn gather_fixed<const W: usize>(acc: &mut [f64], m: &[f64], cols: &[u32]) {
    let (rows, _) = m.as_chunks::<W>();
    let mut sum = [0.0; W];
    for &j in cols {
        let r = &rows[j as usize];
        for c in 0..W {
            sum[c] += r[c];
        }
    }
    add_into(acc, &sum);
}

/// `M[j] += x` for every listed row `j`, where the width is `x.len()`.
fn scatter_rows(m: &mut [f64], x: &[f64], cols: &[u32]) {
    match x.len() {
        2 => scatter_fixed::<2>(m, x, cols),
        3 => scatter_fixed::<3>(m, x, cols),
        4 => scatter_fixed::<4>(m, x, cols),
        w => {
            for &j in cols {
                let j = j as usize;
                add_into(&mut m[j * w..(j + 1) * w], x);
            }
        }
    }
}

fn scatter_fixed<const W: usize>(m: &mut [f64], x: &[f64], cols: &[u32]) {
    let x: [f64; W] = x.try_into().expect("width");
    let (rows, _) = m.as_chunks_mut::<W>();
    for &j in cols {
        let r = &mut rows[j as usize];
        for c in 0..W {
            r[c] += x[c];
        }
    }
}

/// `mean^T M` for a dense `h x c` row-major matrix.
fn project(means: &[f64], m: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for (j, &mu) in means.iter().enumerate() {
        if mu != 0.0 {
            for (o, w) in out.iter_mut().zip(row(m, c, j)) {
                *o += mu * w;
            }
        }
    }
    out
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

pub(crate) fn forward(p: &Params, fz: &Frozen) -> Forward {
    let k = p.bias.len();
    let n = fz.n();
    let nd = fz.n_domains;
    let rows = &fz.data.rows;
    // per-domain label offsets, plus one slot for rows with no known domain
    let mut offsets = vec![p.bias.to_vec(); nd + 1];
    for (d, off) in offsets.iter_mut().take(nd).enumerate() {
        if let Some(lp) = &fz.log_priors {
            add_into(off, &lp[d]);
        }
        if let Some(dr) = &p.dr {
            add_into(off, dr.row(d).as_slice().unwrap());
        }
    }
    let slot = |i: usize| fz.dom[i].unwrap_or(nd);
    let mut z = vec![0.0; n * k];
    let mut e = Vec::new();
    let mut s = Vec::new();
    match &p.weights {
        Weights::Dense(w) => {
            let ws = slice(w);
            if let Some(means) = &fz.means {
                for (d, mu) in means.iter().enumerate() {
                    let proj = project(mu, ws, k);
                    for (o, v) in offsets[d].iter_mut().zip(proj) {
                        *o -= v;
                    }
                }
            }
            for i in 0..n {
                let zi = &mut z[i * k..(i + 1) * k];
                zi.copy_from_slice(&offsets[slot(i)]);
                gather_rows(zi, ws, rows.row(i));
            }
        }
        Weights::Factorized { w1, w2, gr_head } => {
            let r = w1.ncols();
            let (w1s, w2s) = (slice(w1), slice(w2));
            let mut proj = vec![vec![0.0; r]; nd + 1];
            if let Some(means) = &fz.means {
                for (d, mu) in means.iter().enumerate() {
                    proj[d] = project(mu, w1s, r);
                }
            }
            e = vec![0.0; n * r];
            for i in 0..n {
                let ei = &mut e[i * r..(i + 1) * r];
                for (o, v) in ei.iter_mut().zip(&proj[slot(i)]) {
                    *o = -v;
                }
                gather_rows(ei, w1s, rows.row(i));
                let zi = &mut z[i * k..(i + 1) * k];
                zi.copy_from_slice(&offsets[slot(i)]);
                for (q, &eq) in ei.iter().enumerate() {
                    if eq != 0.0 {
                        for (zc, w) in zi.iter_mut().zip(row(w2s, k, q)) {
                            *zc += eq * w;
                        }
                    }
                }
            }
            let hs = slice(&gr_head.weights);
            s = vec![0.0; n * nd];
            for i in 0..n {
                let si = &mut s[i * nd..(i + 1) * nd];
                si.copy_from_slice(gr_head.bias.as_slice().unwrap());
                for (q, &eq) in row(&e, r, i).iter().enumerate() {
                    for (sc, hv) in si.iter_mut().zip(row(hs, nd, q)) {
                        *sc += eq * hv;
                    }
                }
            }
        }
    }
    let r = if e.is_empty() { 0 } else { e.len() / n.max(1) };
    let mut fwd = Forward {
        k,
        r,
        nd,
        z,
        e,
        s,
        probs: Vec::new(),
        dom_probs: Vec::new(),
        loss: LossBreakdown::default(),
    };
    fwd.loss = fwd.compute_loss(p, fz);
    fwd
}

/// Mean of `lse(row) - row[gold]` over rows, writing each row's softmax into
/// `probs`.
fn softmax_ce(logits: &[f64], width: usize, gold: impl Fn(usize) -> usize, probs: &mut Vec<f64>) -> f64 {
    probs.resize(logits.len(), 0.0);
    let n = logits.len() / width;
    let mut total = 0.0;
    for (i, (zi, pi)) in logits.chunks_exact(width).zip(probs.chunks_exact_mut(width)).enumerate() {
        let max = zi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, v) in pi.iter_mut().zip(zi) {
            *p = (v - max).exp();
            sum += *p;
        }
        for p in pi.iter_mut() {
            *p /= sum;
        }
        total += max + sum.ln() - zi[gold(i)];
    }
    total / n as f64
}

impl Forward {
    fn compute_loss(&mut self, p: &Params, fz: &Frozen) -> LossBreakdown {
        let y = &fz.data.y;
        let label_ce = softmax_ce(&self.z, self.k, |i| y[i], &mut self.probs);
        let domain_ce = if self.s.is_empty() {
            0.0
        } else {
            softmax_ce(&self.s, self.nd, |i| fz.dom[i].expect("checked"), &mut self.dom_probs)
        };
        let l1_penalty = p.l1();
        LossBreakdown {
            label_ce,
            domain_ce,
            l1_penalty,
            total: label_ce + fz.gr_weight * domain_ce + fz.lambda * l1_penalty,
        }
    }

    /// Gradients of `label_ce + gr_weight * domain_ce`, except that the
    /// domain term enters the shared factor `W1` with its sign flipped.
    pub fn gradients(&self, p: &Params, fz: &Frozen) -> Gradients {
        let (k, n) = (self.k, fz.n());
        let rows = &fz.data.rows;
        let y = &fz.data.y;
        let nd = self.nd;
        let mut delta = vec![0.0; n * k];
        for i in 0..n {
            let di = &mut delta[i * k..(i + 1) * k];
            di.copy_from_slice(row(&self.probs, k, i));
            di[y[i]] -= 1.0;
            for v in di.iter_mut() {
                *v /= n as f64;
            }
        }
        let mut gb = vec![0.0; k];
        // per-domain sums of delta (slot nd collects rows without a domain)
        let mut dom_delta = vec![vec![0.0; k]; nd + 1];
        for i in 0..n {
            let di = row(&delta, k, i);
            add_into(&mut gb, di);
            add_into(&mut dom_delta[fz.dom[i].unwrap_or(nd)], di);
        }
        let g_dr = p.dr.as_ref().map(|dr| {
            let mut g = Array2::zeros(dr.dim());
            for d in 0..nd {
                for c in 0..k {
                    g[[d, c]] = dom_delta[d][c];
                }
            }
            g
        });
        let weights = match &p.weights {
            Weights::Dense(w) => {
                let mut gw = vec![0.0; w.len()];
                for i in 0..n {
                    scatter_rows(&mut gw, row(&delta, k, i), rows.row(i));
                }
                if let Some(means) = &fz.means {
                    subtract_mean_outer(&mut gw, means, &dom_delta, k);
                }
                Weights::Dense(Array2::from_shape_vec(w.dim(), gw).unwrap())
            }
            Weights::Factorized { w1, w2, gr_head } => {
                let r = self.r;
                let (w2s, hs) = (slice(w2), slice(&gr_head.weights));
                let gr = fz.gr_weight;
                let mut g_w2 = vec![0.0; r * k];
                let mut g_h = vec![0.0; r * nd];
                let mut g_c = vec![0.0; nd];
                let mut ge = vec![0.0; n * r];
                let mut eps = vec![0.0; nd];
                for i in 0..n {
                    let ei = row(&self.e, r, i);
                    let di = row(&delta, k, i);
                    eps.copy_from_slice(row(&self.dom_probs, nd, i));
                    eps[fz.dom[i].expect("checked")] -= 1.0;
                    for v in eps.iter_mut() {
                        *v *= gr / n as f64;
                    }
                    for (q, &eq) in ei.iter().enumerate() {
                        for (g, dc) in g_w2[q * k..(q + 1) * k].iter_mut().zip(di) {
                            *g += eq * dc;
                        }
                        for (g, ec) in g_h[q * nd..(q + 1) * nd].iter_mut().zip(&eps) {
                            *g += eq * ec;
                        }
                    }
                    add_into(&mut g_c, &eps);
                    let gei = &mut ge[i * r..(i + 1) * r];
                    for (q, g) in gei.iter_mut().enumerate() {
                        let label: f64 = row(w2s, k, q).iter().zip(di).map(|(a, b)| a * b).sum();
                        let domain: f64 = row(hs, nd, q).iter().zip(&eps).map(|(a, b)| a * b).sum();
                        // reversal: the domain loss pushes W1 the other way
                        *g = label - domain;
                    }
                }
                let mut g_w1 = vec![0.0; w1.len()];
                let mut dom_ge = vec![vec![0.0; r]; nd + 1];
                for i in 0..n {
                    let gei = row(&ge, r, i);
                    scatter_rows(&mut g_w1, gei, rows.row(i));
                    add_into(&mut dom_ge[fz.dom[i].unwrap_or(nd)], gei);
                }
                if let Some(means) = &fz.means {
                    subtract_mean_outer(&mut g_w1, means, &dom_ge, r);
                }
                Weights::Factorized {
                    w1: Array2::from_shape_vec(w1.dim(), g_w1).unwrap(),
                    w2: Array2::from_shape_vec(w2.dim(), g_w2).unwrap(),
                    gr_head: GrHead {
                        weights: Array2::from_shape_vec(gr_head.weights.dim(), g_h).unwrap(),
                        bias: Array1::from(g_c),
                    },
                }
            }
        };
        Gradients {
            weights,
            bias: Array1::from(gb),
            dr_bias_table: g_dr,
        }
    }
}

/// `g -= sum_d mean_d (x) sums_d` for an `h x c` row-major gradient.
fn subtract_mean_outer(g: &mut [f64], means: &[&[f64]], sums: &[Vec<f64>], c: usize) {
    for (d, mu) in means.iter().enumerate() {
        for (j, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                for (gv, s) in g[j * c..(j + 1) * c].iter_mut().zip(&sums[d]) {
                    *gv -= m * s;
                }
            }
        }
    }
}

/// Loss of `model` on `data`, each instance using its own domain's stored
/// statistics and DR row.
pub fn batch_loss(model: &LinearModel, data: &TrainingSet, config: &TrainConfig) -> Result<LossBreakdown> {
    let fz = Frozen::from_config(model, data, config)?;
    Ok(forward(&Params::of(model), &fz).loss)
}

/// Analytic gradients of the smooth part of [`batch_loss`], with the domain
/// loss reversed into `W1`.
pub fn batch_gradients(model: &LinearModel, data: &TrainingSet, config: &TrainConfig) -> Result<Gradients> {
    let fz = Frozen::from_config(model, data, config)?;
    let p = Params::of(model);
    Ok(forward(&p, &fz).gradients(&p, &fz))
}

/// Mean label cross-entropy only (the model-selection criterion).
pub fn label_loss(model: &LinearModel, data: &TrainingSet) -> Result<f64> {
    let fz = Frozen::new(model, data, 0.0, 0.0)?;
    Ok(forward(&Params::of(model), &fz).loss.label_ce)
}

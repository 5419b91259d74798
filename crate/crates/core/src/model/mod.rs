//! Linear classifiers over binarized bag-of-words features, with optional
//! domain-specific bias (DSB), domain-specific normalization (DSN), a
//! per-domain residual bias table (DR) and a factorized weight matrix with an
//! adversarial domain head (GR).

mod lexicon;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::adapt::{apply_dsn, LabelDistribution};
use crate::corpus::{BinaryRows, DomainStats, FeatureVector, TextPipeline, Vocabulary};
use crate::error::{Error, Result};

pub use lexicon::{classify_with_threshold, elicit_lexicon, lexicon_score, Lexicon, WordList};

/// Current model file format.
pub const FORMAT_VERSION: u64 = 1;

/// Linear domain classifier fed by the factorized representation. Trained
/// through a gradient-reversal layer; never used for label prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct GrHead {
    /// `r x |D|`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    /// `h x k`
    Dense(Array2<f64>),
    /// `W = W1 (h x r) . W2 (r x k)`
    Factorized {
        w1: Array2<f64>,
        w2: Array2<f64>,
        gr_head: GrHead,
    },
}

impl Weights {
    pub fn is_factorized(&self) -> bool {
        matches!(self, Weights::Factorized { .. })
    }

    /// The `h x k` matrix the label path effectively applies.
    pub fn effective(&self) -> Array2<f64> {
        match self {
            Weights::Dense(w) => w.clone(),
            Weights::Factorized { w1, w2, .. } => w1.dot(w2),
        }
    }
}

/// Adaptation hooks the model was trained with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub dsb: bool,
    pub dsn: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format_version: u64,
    /// SHA-256 of the canonical training configuration.
    pub config_digest: String,
    pub stopwords_sha256: String,
    /// L1 strength the final model was trained with.
    pub lambda: f64,
    pub seed: u64,
}

/// The exchanged artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub labels: Vec<String>,
    /// Training domains, in the order used by the DR table, the GR head and
    /// `domain_stats`.
    pub domains: Vec<String>,
    pub vocab: Vocabulary,
    pub pipeline: TextPipeline,
    pub weights: Weights,
    pub bias: Array1<f64>,
    /// `|D| x k`, present iff trained with DR.
    pub dr_bias_table: Option<Array2<f64>>,
    pub flags: Flags,
    /// One entry per training domain when DSB or DSN is enabled, else empty.
    pub domain_stats: Vec<DomainStats>,
    pub provenance: Provenance,
}

/// Information about the target domain injected at prediction time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionContext {
    pub label_dist: Option<LabelDistribution>,
    pub dsn_means: Option<Vec<f64>>,
}

impl PredictionContext {
    pub fn new(label_dist: Option<LabelDistribution>, dsn_means: Option<Vec<f64>>) -> Self {
        Self { label_dist, dsn_means }
    }

    pub fn is_empty(&self) -> bool {
        self.label_dist.is_none() && self.dsn_means.is_none()
    }
}

impl LinearModel {
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn h(&self) -> usize {
        self.vocab.len()
    }

    /// Inner dimension of a factorized model.
    pub fn rank(&self) -> Option<usize> {
        match &self.weights {
            Weights::Dense(_) => None,
            Weights::Factorized { w1, .. } => Some(w1.ncols()),
        }
    }

    pub fn uses_dr(&self) -> bool {
        self.dr_bias_table.is_some()
    }

    pub fn uses_gr(&self) -> bool {
        self.weights.is_factorized()
    }

    /// Short technique label such as `DSN+DSB` or `GR`.
    pub fn technique_name(&self) -> String {
        technique_name(self.uses_dr(), self.uses_gr(), self.flags)
    }

    pub fn domain_index(&self, domain: &str) -> Option<usize> {
        self.domains.iter().position(|d| d == domain)
    }

    pub fn stats_for(&self, domain: &str) -> Option<&DomainStats> {
        self.domain_stats.iter().find(|s| s.domain == domain)
    }

    /// Checks dimensions, finiteness and flag/payload consistency.
    pub fn validate(&self) -> Result<()> {
        let (h, k, n_dom) = (self.h(), self.k(), self.domains.len());
        if k < 2 {
            return Err(Error::Format("model needs at least 2 labels".into()));
        }
        let check = |what: &str, shape: (usize, usize), want: (usize, usize)| {
            if shape != want {
                Err(Error::Format(format!("{what} has shape {shape:?}, expected {want:?}")))
            } else {
                Ok(())
            }
        };
        let mut all_finite = self.bias.iter().all(|v| v.is_finite());
        match &self.weights {
            Weights::Dense(w) => {
                check("weights", w.dim(), (h, k))?;
                all_finite &= w.iter().all(|v| v.is_finite());
            }
            Weights::Factorized { w1, w2, gr_head } => {
                let r = w1.ncols();
                check("w1", w1.dim(), (h, r))?;
                check("w2", w2.dim(), (r, k))?;
                check("gr_head", gr_head.weights.dim(), (r, n_dom))?;
                if gr_head.bias.len() != n_dom {
                    return Err(Error::Format("gr_head bias length differs from domain count".into()));
                }
                all_finite &= w1.iter().chain(w2).chain(&gr_head.weights).chain(&gr_head.bias).all(|v| v.is_finite());
            }
        }
        if self.bias.len() != k {
            return Err(Error::Format(format!("bias has length {}, expected {k}", self.bias.len())));
        }
        if let Some(t) = &self.dr_bias_table {
            check("dr_bias_table", t.dim(), (n_dom, k))?;
            all_finite &= t.iter().all(|v| v.is_finite());
        }
        if !all_finite {
            return Err(Error::Format("non-finite parameter".into()));
        }
        if self.flags.dsb || self.flags.dsn {
            for d in &self.domains {
                let s = self
                    .stats_for(d)
                    .ok_or_else(|| Error::Format(format!("missing domain stats for {d:?}")))?;
                if s.label_dist.probs.len() != k {
                    return Err(Error::Format(format!("label distribution for {d:?} has wrong length")));
                }
                if s.feature_means.len() != h {
                    return Err(Error::Format(format!("feature means for {d:?} have wrong length")));
                }
            }
            if self.domain_stats.len() != n_dom {
                return Err(Error::Format("domain stats do not match the domain list".into()));
            }
        } else if !self.domain_stats.is_empty() {
            return Err(Error::Format("domain stats present without DSB or DSN".into()));
        }
        Ok(())
    }

    /// Resolves the label distribution used by DSB: the context wins, then the
    /// stored stats of a known training domain.
    fn resolve_prior<'a>(&'a self, ctx: &'a PredictionContext, train_domain: Option<&str>) -> Result<Option<&'a [f64]>> {
        if !self.flags.dsb {
            return Ok(None);
        }
        if let Some(d) = &ctx.label_dist {
            if d.probs.len() != self.k() {
                return Err(Error::DimensionMismatch {
                    expected: self.k(),
                    got: d.probs.len(),
                });
            }
            return Ok(Some(&d.probs));
        }
        train_domain
            .and_then(|d| self.stats_for(d))
            .map(|s| Some(s.label_dist.probs.as_slice()))
            .ok_or(Error::MissingLabelDistribution)
    }

    fn resolve_means<'a>(&'a self, ctx: &'a PredictionContext, train_domain: Option<&str>) -> Result<Option<&'a [f64]>> {
        if !self.flags.dsn {
            return Ok(None);
        }
        if let Some(m) = &ctx.dsn_means {
            if m.len() != self.h() {
                return Err(Error::DimensionMismatch {
                    expected: self.h(),
                    got: m.len(),
                });
            }
            return Ok(Some(m));
        }
        train_domain
            .and_then(|d| self.stats_for(d))
            .map(|s| Some(s.feature_means.as_slice()))
            .ok_or(Error::MissingFeatureMeans)
    }

    fn dr_row(&self, train_domain: Option<&str>) -> Option<Vec<f64>> {
        let table = self.dr_bias_table.as_ref()?;
        let i = self.domain_index(train_domain?)?;
        Some(table.row(i).to_vec())
    }

    /// Precomputes everything that does not depend on the document, so each
    /// prediction is a sparse row sum.
    pub fn predictor(&self, ctx: &PredictionContext, train_domain: Option<&str>) -> Result<Predictor> {
        let mut p = self.scorer(ctx, train_domain)?;
        p.log_prior = match self.resolve_prior(ctx, train_domain)? {
            Some(prior) => Some(log_probs(prior)?),
            None => None,
        };
        Ok(p)
    }

    /// Like [`LinearModel::predictor`] but never adds the DSB term, even when
    /// the model uses DSB. Pair with [`LogitTable`] to try many label
    /// distributions on the same documents.
    pub fn scorer(&self, ctx: &PredictionContext, train_domain: Option<&str>) -> Result<Predictor> {
        let w = self.weights.effective();
        let mut offset = self.bias.to_vec();
        if let Some(means) = self.resolve_means(ctx, train_domain)? {
            // f'W = fW - mean.W
            for (j, &m) in means.iter().enumerate() {
                if m != 0.0 {
                    for (o, wv) in offset.iter_mut().zip(w.row(j)) {
                        *o -= m * wv;
                    }
                }
            }
        }
        if let Some(dr) = self.dr_row(train_domain) {
            for (o, g) in offset.iter_mut().zip(dr) {
                *o += g;
            }
        }
        Ok(Predictor {
            w,
            offset,
            log_prior: None,
        })
    }
}

pub(crate) fn technique_name(dr: bool, gr: bool, flags: Flags) -> String {
    let mut parts = Vec::new();
    if dr {
        parts.push("DR");
    }
    if gr {
        parts.push("GR");
    }
    if flags.dsn {
        parts.push("DSN");
    }
    if flags.dsb {
        parts.push("DSB");
    }
    if parts.is_empty() {
        "Base".to_string()
    } else {
        parts.join("+")
    }
}

pub(crate) fn log_probs(p: &[f64]) -> Result<Vec<f64>> {
    p.iter()
        .enumerate()
        .map(|(c, &v)| if v > 0.0 { Ok(v.ln()) } else { Err(Error::ZeroProbability { class: c }) })
        .collect()
}

/// A model bound to one prediction context.
#[derive(Clone, Debug)]
pub struct Predictor {
    w: Array2<f64>,
    offset: Vec<f64>,
    log_prior: Option<Vec<f64>>,
}

impl Predictor {
    pub fn k(&self) -> usize {
        self.offset.len()
    }

    /// Logits without the DSB term, for a binarized (unnormalized) vector.
    pub fn prior_free_logits(&self, fv: &FeatureVector) -> Vec<f64> {
        let mut z = self.offset.clone();
        for &(j, v) in fv.entries() {
            for (zc, wv) in z.iter_mut().zip(self.w.row(j)) {
                *zc += v * wv;
            }
        }
        z
    }

    pub fn logits(&self, fv: &FeatureVector) -> Vec<f64> {
        let mut z = self.prior_free_logits(fv);
        if let Some(lp) = &self.log_prior {
            for (zc, l) in z.iter_mut().zip(lp) {
                *zc += l;
            }
        }
        z
    }

    pub fn predict(&self, fv: &FeatureVector) -> usize {
        predict_label(&self.logits(fv))
    }

    /// Prior-free logits for every vector.
    pub fn score_vectors(&self, fvs: &[FeatureVector]) -> LogitTable {
        let mut logits = Vec::with_capacity(fvs.len() * self.k());
        for fv in fvs {
            logits.extend(self.prior_free_logits(fv));
        }
        LogitTable { k: self.k(), logits }
    }

    /// Prior-free logits for every row.
    pub fn score_rows(&self, rows: &BinaryRows) -> LogitTable {
        let k = self.k();
        let mut logits = Vec::with_capacity(rows.n_rows() * k);
        for i in 0..rows.n_rows() {
            let start = logits.len();
            logits.extend_from_slice(&self.offset);
            for &j in rows.row(i) {
                for (zc, wv) in logits[start..].iter_mut().zip(self.w.row(j as usize)) {
                    *zc += wv;
                }
            }
        }
        LogitTable { k, logits }
    }
}

/// Prior-free logits of a fixed document set, reusable across many candidate
/// label distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitTable {
    k: usize,
    logits: Vec<f64>,
}

impl LogitTable {
    pub fn len(&self) -> usize {
        self.logits.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.k..(i + 1) * self.k]
    }

    /// Argmax predictions after adding `log_prior` (if any) to each row.
    pub fn predict(&self, log_prior: Option<&[f64]>) -> Vec<usize> {
        (0..self.len()).map(|i| self.predict_one(i, log_prior)).collect()
    }

    pub fn predict_one(&self, i: usize, log_prior: Option<&[f64]>) -> usize {
        let row = self.row(i);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..self.k {
            let v = row[c] + log_prior.map_or(0.0, |p| p[c]);
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        best
    }

    /// Accuracy on `rows` (positions into the table) against `golds`.
    pub fn accuracy_on(&self, rows: &[usize], golds: &[usize], log_prior: Option<&[f64]>) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows.iter().filter(|&&i| self.predict_one(i, log_prior) == golds[i]).count();
        hits as f64 / rows.len() as f64
    }
}

/// Label logits for one document.
///
/// The label path is `b + f'(x) W` where `f'` is the DSN-normalized vector when
/// the model uses DSN and `W` is `W1 W2` for factorized models. DSB adds the
/// log of the target label distribution; DR adds the stored row for a known
/// training domain and nothing for any other domain.
pub fn forward_logits(
    model: &LinearModel,
    fv: &FeatureVector,
    ctx: &PredictionContext,
    train_domain: Option<&str>,
) -> Result<Vec<f64>> {
    if fv.dim() != model.h() {
        return Err(Error::DimensionMismatch {
            expected: model.h(),
            got: fv.dim(),
        });
    }
    let normalized;
    let input = match model.resolve_means(ctx, train_domain)? {
        Some(means) => {
            normalized = apply_dsn(fv, means);
            &normalized
        }
        None => fv,
    };
    let mut z = model.bias.to_vec();
    match &model.weights {
        Weights::Dense(w) => {
            for &(j, v) in input.entries() {
                for (zc, wv) in z.iter_mut().zip(w.row(j)) {
                    *zc += v * wv;
                }
            }
        }
        Weights::Factorized { w1, w2, .. } => {
            let mut e = vec![0.0; w1.ncols()];
            for &(j, v) in input.entries() {
                for (ec, wv) in e.iter_mut().zip(w1.row(j)) {
                    *ec += v * wv;
                }
            }
            for (r, er) in e.iter().enumerate() {
                for (zc, wv) in z.iter_mut().zip(w2.row(r)) {
                    *zc += er * wv;
                }
            }
        }
    }
    if let Some(p) = model.resolve_prior(ctx, train_domain)? {
        for (zc, lp) in z.iter_mut().zip(log_probs(p)?) {
            *zc += lp;
        }
    }
    if let Some(dr) = model.dr_row(train_domain) {
        for (zc, g) in z.iter_mut().zip(dr) {
            *zc += g;
        }
    }
    Ok(z)
}

/// Softmax with max subtraction.
pub fn predict_proba(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Argmax; ties go to the lowest index.
pub fn predict_label(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Replaces a factorized weight pair by its product. The domain head is
/// dropped; a dense model is returned unchanged.
pub fn collapse_weights(model: &LinearModel) -> LinearModel {
    let mut out = model.clone();
    if model.weights.is_factorized() {
        out.weights = Weights::Dense(model.weights.effective());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::array;

    pub(crate) fn toy_model(weights: Weights, k: usize, h: usize) -> LinearModel {
        LinearModel {
            labels: (0..k).map(|c| format!("c{c}")).collect(),
            domains: vec!["d0".into()],
            vocab: Vocabulary::from_tokens((0..h).map(|j| format!("t{j}")).collect()).unwrap(),
            pipeline: TextPipeline::default(),
            weights,
            bias: Array1::zeros(k),
            dr_bias_table: None,
            flags: Flags::default(),
            domain_stats: vec![],
            provenance: Provenance {
                format_version: FORMAT_VERSION,
                config_digest: String::new(),
                stopwords_sha256: String::new(),
                lambda: 0.0,
                seed: 0,
            },
        }
    }

    fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.uniform(-1.0, 1.0))
    }

    fn random_factorized(rng: &mut SeededRng, h: usize, r: usize, k: usize) -> LinearModel {
        let w1 = random_matrix(rng, h, r);
        let w2 = random_matrix(rng, r, k);
        let gr_head = GrHead {
            weights: random_matrix(rng, r, 1),
            bias: Array1::zeros(1),
        };
        let mut m = toy_model(Weights::Factorized { w1, w2, gr_head }, k, h);
        m.bias = Array1::from_shape_fn(k, |_| rng.uniform(-1.0, 1.0));
        m
    }

    fn random_binary(rng: &mut SeededRng, h: usize) -> FeatureVector {
        FeatureVector::binary(h, (0..h).filter(|_| rng.chance(0.3)).collect())
    }

    #[test]
    fn dsb_only_term_survives() {
        let mut m = toy_model(Weights::Dense(Array2::zeros((3, 2))), 2, 3);
        m.flags.dsb = true;
        let ctx = PredictionContext::new(Some(LabelDistribution::from_probs(vec![0.7, 0.3]).unwrap()), None);
        let z = forward_logits(&m, &FeatureVector::binary(3, vec![0, 2]), &ctx, None).unwrap();
        assert!((z[0] - 0.7f64.ln()).abs() < 1e-15);
        assert!((z[1] - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_feature_dot_product() {
        let w = array![[2.0, -1.0], [5.0, 5.0]];
        let m = toy_model(Weights::Dense(w), 2, 2);
        let z = forward_logits(&m, &FeatureVector::binary(2, vec![0]), &PredictionContext::default(), None).unwrap();
        assert_eq!(z, vec![2.0, -1.0]);
    }

    #[test]
    fn dsb_without_distribution_fails() {
        let mut m = toy_model(Weights::Dense(Array2::zeros((3, 2))), 2, 3);
        m.flags.dsb = true;
        let err = forward_logits(&m, &FeatureVector::binary(3, vec![]), &PredictionContext::default(), None);
        assert!(matches!(err, Err(Error::MissingLabelDistribution)));
    }

    #[test]
    fn dimension_mismatch() {
        let m = toy_model(Weights::Dense(Array2::zeros((3, 2))), 2, 3);
        let err = forward_logits(&m, &FeatureVector::binary(4, vec![]), &PredictionContext::default(), None);
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 3, got: 4 })));
    }

    #[test]
    fn factorized_matches_dense_product_oracle() {
        let mut rng = SeededRng::new(11);
        let (h, r, k) = (9, 4, 3);
        let m = random_factorized(&mut rng, h, r, k);
        let (w1, w2) = match &m.weights {
            Weights::Factorized { w1, w2, .. } => (w1.clone(), w2.clone()),
            _ => unreachable!(),
        };
        for _ in 0..50 {
            let fv = random_binary(&mut rng, h);
            let z = forward_logits(&m, &fv, &PredictionContext::default(), None).unwrap();
            // oracle: explicit triple loop over the dense product
            for c in 0..k {
                let mut expect = m.bias[c];
                for j in fv.positions() {
                    for q in 0..r {
                        expect += w1[[j, q]] * w2[[q, c]];
                    }
                }
                assert!((z[c] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn collapse_identity_and_zero_cases() {
        let mut rng = SeededRng::new(5);
        let w2 = random_matrix(&mut rng, 3, 2);
        let head = GrHead {
            weights: Array2::zeros((3, 1)),
            bias: Array1::zeros(1),
        };
        let m = toy_model(
            Weights::Factorized {
                w1: Array2::eye(3),
                w2: w2.clone(),
                gr_head: head.clone(),
            },
            2,
            3,
        );
        assert_eq!(collapse_weights(&m).weights, Weights::Dense(w2));

        let m = toy_model(
            Weights::Factorized {
                w1: random_matrix(&mut rng, 3, 3),
                w2: Array2::zeros((3, 2)),
                gr_head: head,
            },
            2,
            3,
        );
        assert_eq!(collapse_weights(&m).weights, Weights::Dense(Array2::zeros((3, 2))));
        let dense = collapse_weights(&m);
        assert_eq!(collapse_weights(&dense), dense);
    }

    #[test]
    fn collapse_preserves_logits() {
        let mut rng = SeededRng::new(99);
        let m = random_factorized(&mut rng, 12, 5, 3);
        let c = collapse_weights(&m);
        for _ in 0..100 {
            let fv = random_binary(&mut rng, 12);
            let a = forward_logits(&m, &fv, &PredictionContext::default(), None).unwrap();
            let b = forward_logits(&c, &fv, &PredictionContext::default(), None).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let p = predict_proba(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = predict_proba(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = predict_proba(&[1000.0, 0.0]);
        assert!(p[0] > 1.0 - 1e-15 && p[1] >= 0.0 && p[1] < 1e-300_f64.max(1e-400));
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(predict_label(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(predict_label(&[0.5, 0.5]), 0);
        assert_eq!(predict_label(&[0.0, 0.0, 1.0]), 2);
    }

    #[test]
    fn predictor_matches_forward_with_dsn_dsb_dr() {
        let mut rng = SeededRng::new(8);
        let (h, k) = (10, 3);
        let mut m = toy_model(Weights::Dense(random_matrix(&mut rng, h, k)), k, h);
        m.flags = Flags { dsb: true, dsn: true };
        m.dr_bias_table = Some(random_matrix(&mut rng, 1, k));
        let means: Vec<f64> = (0..h).map(|_| rng.unit()).collect();
        m.domain_stats = vec![DomainStats {
            domain: "d0".into(),
            n_instances: 5,
            label_dist: LabelDistribution::from_probs(vec![0.5, 0.3, 0.2]).unwrap(),
            feature_means: means.clone(),
        }];
        m.validate().unwrap();
        let ctx = PredictionContext::new(Some(LabelDistribution::from_probs(vec![0.1, 0.6, 0.3]).unwrap()), Some(means));
        for dom in [None, Some("d0"), Some("elsewhere")] {
            let p = m.predictor(&ctx, dom).unwrap();
            for _ in 0..20 {
                let fv = random_binary(&mut rng, h);
                let a = forward_logits(&m, &fv, &ctx, dom).unwrap();
                let b = p.logits(&fv);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}

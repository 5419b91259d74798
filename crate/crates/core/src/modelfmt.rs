//! The versioned JSON model file (`.mda.json`) and lexicon CSV export.
//!
//! Files are canonical: object keys sorted, floats in shortest round-trip
//! form, weight matrices as sparse `[row, col, value]` triples. Saving the
//! same model twice yields identical bytes and loading restores every
//! parameter bit-exactly. No document text or per-document label is stored.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{stopwords_sha256, DomainStats, TextPipeline, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{elicit_lexicon, Flags, GrHead, Lexicon, LinearModel, Provenance, Weights, FORMAT_VERSION};

/// Conventional model file extension.
pub const MODEL_EXTENSION: &str = ".mda.json";

type Triple = (usize, usize, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Dense,
    Factorized,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    k: usize,
    h: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizerInfo {
    stopwords_sha256: String,
    tweet_mode: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFlags {
    dsb: bool,
    dsn: bool,
    dr: bool,
    gr: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGrHead {
    weights: Vec<Triple>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProvenance {
    config_digest: String,
    lambda: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u64,
    kind: Kind,
    dims: Dims,
    labels: Vec<String>,
    domains: Vec<String>,
    vocabulary: Vec<String>,
    tokenizer: TokenizerInfo,
    flags: FileFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Triple>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w1: Option<Vec<Triple>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w2: Option<Vec<Triple>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gr_head: Option<FileGrHead>,
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dr_bias_table: Option<Vec<Vec<f64>>>,
    domain_stats: Vec<DomainStats>,
    provenance: FileProvenance,
}

/// Entries whose bit pattern is not `+0.0` (so `-0.0` survives the trip).
fn to_triples(m: &Array2<f64>) -> Vec<Triple> {
    m.indexed_iter()
        .filter(|(_, v)| v.to_bits() != 0)
        .map(|((i, j), &v)| (i, j, v))
        .collect()
}

fn from_triples(what: &str, triples: &[Triple], rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows, cols));
    let mut seen = Array2::from_elem((rows, cols), false);
    for &(row, col, v) in triples {
        if row >= rows || col >= cols {
            return Err(Error::WeightIndexOutOfRange { row, col, rows, cols });
        }
        if std::mem::replace(&mut seen[[row, col]], true) {
            return Err(Error::Format(format!("duplicate {what} entry ({row}, {col})")));
        }
        m[[row, col]] = v;
    }
    Ok(m)
}

fn to_file(model: &LinearModel) -> ModelFile {
    let (kind, weights, w1, w2, gr_head, r) = match &model.weights {
        Weights::Dense(w) => (Kind::Dense, Some(to_triples(w)), None, None, None, None),
        Weights::Factorized { w1, w2, gr_head } => (
            Kind::Factorized,
            None,
            Some(to_triples(w1)),
            Some(to_triples(w2)),
            Some(FileGrHead {
                weights: to_triples(&gr_head.weights),
                bias: gr_head.bias.to_vec(),
            }),
            Some(w1.ncols()),
        ),
    };
    ModelFile {
        format_version: FORMAT_VERSION,
        kind,
        dims: Dims {
            k: model.k(),
            h: model.h(),
            r,
        },
        labels: model.labels.clone(),
        domains: model.domains.clone(),
        vocabulary: model.vocab.tokens().to_vec(),
        tokenizer: TokenizerInfo {
            stopwords_sha256: model.provenance.stopwords_sha256.clone(),
            tweet_mode: model.pipeline.tweet_mode,
        },
        flags: FileFlags {
            dsb: model.flags.dsb,
            dsn: model.flags.dsn,
            dr: model.uses_dr(),
            gr: model.uses_gr(),
        },
        weights,
        w1,
        w2,
        gr_head,
        bias: model.bias.to_vec(),
        dr_bias_table: model.dr_bias_table.as_ref().map(|t| t.rows().into_iter().map(|r| r.to_vec()).collect()),
        domain_stats: model.domain_stats.clone(),
        provenance: FileProvenance {
            config_digest: model.provenance.config_digest.clone(),
            lambda: model.provenance.lambda,
            seed: model.provenance.seed,
        },
    }
}

fn from_file(f: ModelFile) -> Result<LinearModel> {
    let Dims { k, h, r } = f.dims;
    if f.labels.len() != k || f.vocabulary.len() != h {
        return Err(Error::DimensionMismatch {
            expected: k * h,
            got: f.labels.len() * f.vocabulary.len(),
        });
    }
    let gr = f.kind == Kind::Factorized;
    if f.flags.gr != gr || f.gr_head.is_some() != gr {
        return Err(Error::Format("gr flag, model kind and gr_head disagree".into()));
    }
    if f.flags.dr != f.dr_bias_table.is_some() {
        return Err(Error::Format("dr flag and dr_bias_table disagree".into()));
    }
    let n_dom = f.domains.len();
    let weights = match (f.kind, f.weights, f.w1, f.w2, f.gr_head, r) {
        (Kind::Dense, Some(w), None, None, None, None) => Weights::Dense(from_triples("weights", &w, h, k)?),
        (Kind::Factorized, None, Some(w1), Some(w2), Some(head), Some(r)) => Weights::Factorized {
            w1: from_triples("w1", &w1, h, r)?,
            w2: from_triples("w2", &w2, r, k)?,
            gr_head: GrHead {
                weights: from_triples("gr_head", &head.weights, r, n_dom)?,
                bias: Array1::from(head.bias),
            },
        },
        _ => return Err(Error::Format(format!("payload does not match model kind {:?}", f.kind))),
    };
    let dr_bias_table = match f.dr_bias_table {
        Some(rows) => {
            if rows.len() != n_dom || rows.iter().any(|r| r.len() != k) {
                return Err(Error::Format(format!("dr_bias_table must be {n_dom}x{k}")));
            }
            Some(Array2::from_shape_vec((n_dom, k), rows.concat()).expect("checked shape"))
        }
        None => None,
    };
    let model = LinearModel {
        labels: f.labels,
        domains: f.domains,
        vocab: Vocabulary::from_tokens(f.vocabulary)?,
        pipeline: TextPipeline {
            tweet_mode: f.tokenizer.tweet_mode,
        },
        weights,
        bias: Array1::from(f.bias),
        dr_bias_table,
        flags: Flags {
            dsb: f.flags.dsb,
            dsn: f.flags.dsn,
        },
        domain_stats: f.domain_stats,
        provenance: Provenance {
            format_version: f.format_version,
            config_digest: f.provenance.config_digest,
            stopwords_sha256: f.tokenizer.stopwords_sha256,
            lambda: f.provenance.lambda,
            seed: f.provenance.seed,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Canonical pretty-printed JSON of a validated model.
pub fn to_canonical_json(model: &LinearModel) -> Result<String> {
    model.validate()?;
    // `Value` objects are key-sorted maps
    let value = serde_json::to_value(to_file(model))?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Parses and validates a model file body. Logs a warning when the file was
/// produced with a different stopword list than the one compiled in.
pub fn from_json_str(text: &str) -> Result<LinearModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format("missing format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let model = from_file(serde_json::from_value(value)?)?;
    if !tokenizer_matches(&model) {
        log::warn!(
            "tokenizer mismatch: model stopword hash {} differs from local {}",
            model.provenance.stopwords_sha256,
            stopwords_sha256()
        );
    }
    Ok(model)
}

/// Whether the model's stopword list is the one this build tokenizes with.
pub fn tokenizer_matches(model: &LinearModel) -> bool {
    model.provenance.stopwords_sha256 == stopwords_sha256()
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let body = to_canonical_json(model)?;
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    from_json_str(&std::fs::read_to_string(path)?)
}

/// `%g` with 6 significant digits.
fn format_g(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

/// Writes a lexicon as CSV. With weights: `class,rank,token,weight`, one row
/// per entry, rank from 1. Without: one column per class, one row per rank.
pub fn write_lexicon_csv(lexicon: &Lexicon, out: impl Write, with_weights: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    if with_weights {
        w.write_record(["class", "rank", "token", "weight"])?;
        for (class, entries) in lexicon.classes.iter().zip(&lexicon.entries) {
            for (rank, (token, weight)) in entries.iter().enumerate() {
                w.write_record([class.as_str(), &(rank + 1).to_string(), token, &format_g(*weight)])?;
            }
        }
    } else {
        w.write_record(&lexicon.classes)?;
        let depth = lexicon.entries.iter().map(Vec::len).max().unwrap_or(0);
        for rank in 0..depth {
            let row: Vec<&str> = lexicon
                .entries
                .iter()
                .map(|e| e.get(rank).map_or("", |(t, _)| t.as_str()))
                .collect();
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The lexicon CSV as a string.
pub fn lexicon_csv(model: &LinearModel, top_n: usize, with_weights: bool) -> Result<String> {
    let mut buf = Vec::new();
    write_lexicon_csv(&elicit_lexicon(model, top_n), &mut buf, with_weights)?;
    Ok(String::from_utf8(buf).expect("csv of utf-8 strings"))
}

/// Top-`top_n` lexicon of every class, written to `path`.
pub fn export_lexicon(model: &LinearModel, top_n: usize, path: impl AsRef<Path>, with_weights: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_lexicon_csv(&elicit_lexicon(model, top_n), std::io::BufWriter::new(file), with_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::LabelDistribution;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn matrix(rng: &mut SeededRng, rows: usize, cols: usize, sparsity: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| {
            if rng.chance(sparsity) {
                0.0
            } else {
                // awkward magnitudes exercise the shortest round-trip printer
                rng.uniform(-1.0, 1.0) * 10f64.powi(rng.below(20) as i32 - 10)
            }
        })
    }

    fn random_model(seed: u64, dsb: bool, dsn: bool, dr: bool, gr: bool) -> LinearModel {
        let mut rng = SeededRng::new(seed);
        let (k, h, n_dom, r) = (2 + rng.below(3), 1 + rng.below(6), 1 + rng.below(3), 1 + rng.below(3));
        let domains: Vec<String> = (0..n_dom).map(|d| format!("dom{d}")).collect();
        let weights = if gr {
            Weights::Factorized {
                w1: matrix(&mut rng, h, r, 0.3),
                w2: matrix(&mut rng, r, k, 0.3),
                gr_head: GrHead {
                    weights: matrix(&mut rng, r, n_dom, 0.0),
                    bias: Array1::from_shape_fn(n_dom, |_| rng.uniform(-1.0, 1.0)),
                },
            }
        } else {
            let mut w = matrix(&mut rng, h, k, 0.4);
            w[[0, 0]] = -0.0;
            Weights::Dense(w)
        };
        let domain_stats = if dsb || dsn {
            domains
                .iter()
                .map(|d| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.1, 1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    let mut label_dist = LabelDistribution::from_probs(raw.iter().map(|v| v / total).collect()).unwrap();
                    label_dist.n_samples_used = rng.below(100);
                    DomainStats {
                        domain: d.clone(),
                        n_instances: rng.below(1000),
                        label_dist,
                        feature_means: (0..h).map(|_| rng.unit()).collect(),
                    }
                })
                .collect()
        } else {
            vec![]
        };
        LinearModel {
            labels: (0..k).map(|c| format!("label \"{c}\"")).collect(),
            vocab: Vocabulary::from_tokens((0..h).map(|j| format!("tok{j}é")).collect()).unwrap(),
            pipeline: TextPipeline { tweet_mode: rng.chance(0.5) },
            weights,
            bias: Array1::from_shape_fn(k, |_| rng.uniform(-3.0, 3.0)),
            dr_bias_table: dr.then(|| matrix(&mut rng, n_dom, k, 0.0)),
            flags: Flags { dsb, dsn },
            domain_stats,
            provenance: Provenance {
                format_version: FORMAT_VERSION,
                config_digest: format!("{:016x}", rng.next_u64()),
                stopwords_sha256: stopwords_sha256(),
                lambda: rng.unit() * 1e-4,
                seed: rng.next_u64(),
            },
            domains,
        }
    }

    fn bit_equal(a: &LinearModel, b: &LinearModel) -> bool {
        // PartialEq on f64 treats -0.0 == 0.0, so compare the canonical bytes
        // of parameter arrays as well
        let bits = |m: &LinearModel| -> Vec<u64> {
            let mut v: Vec<u64> = m.bias.iter().map(|x| x.to_bits()).collect();
            match &m.weights {
                Weights::Dense(w) => v.extend(w.iter().map(|x| x.to_bits())),
                Weights::Factorized { w1, w2, gr_head } => v.extend(
                    w1.iter()
                        .chain(w2)
                        .chain(&gr_head.weights)
                        .chain(&gr_head.bias)
                        .map(|x| x.to_bits()),
                ),
            }
            if let Some(t) = &m.dr_bias_table {
                v.extend(t.iter().map(|x| x.to_bits()));
            }
            for s in &m.domain_stats {
                v.extend(s.feature_means.iter().chain(&s.label_dist.probs).map(|x| x.to_bits()));
            }
            v.push(m.provenance.lambda.to_bits());
            v
        };
        a == b && bits(a) == bits(b)
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), dsb: bool, dsn: bool, dr: bool, gr: bool) {
            let m = random_model(seed, dsb, dsn, dr, gr);
            let text = to_canonical_json(&m).unwrap();
            let back = from_json_str(&text).unwrap();
            prop_assert!(bit_equal(&m, &back));
            prop_assert_eq!(to_canonical_json(&back).unwrap(), text);
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.mda.json"), dir.path().join("b.mda.json"));
        let m = random_model(3, true, true, true, false);
        save_model(&m, &a).unwrap();
        save_model(&load_model(&a).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn keys_are_sorted() {
        let text = to_canonical_json(&random_model(1, true, false, false, false)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.find("\"bias\"").unwrap() < text.find("\"vocabulary\"").unwrap());
    }

    #[test]
    fn dsn_model_stores_means_of_length_h() {
        let m = random_model(7, false, true, false, false);
        let v: serde_json::Value = serde_json::from_str(&to_canonical_json(&m).unwrap()).unwrap();
        for s in v["domain_stats"].as_array().unwrap() {
            assert_eq!(s["feature_means"].as_array().unwrap().len(), m.h());
        }
    }

    fn edit(m: &LinearModel, f: impl FnOnce(&mut serde_json::Value)) -> Result<LinearModel> {
        let mut v: serde_json::Value = serde_json::from_str(&to_canonical_json(m).unwrap()).unwrap();
        f(&mut v);
        from_json_str(&v.to_string())
    }

    #[test]
    fn corrupted_triple_is_rejected() {
        let m = random_model(2, false, false, false, false);
        let k = m.k();
        let err = edit(&m, |v| v["weights"].as_array_mut().unwrap().push(serde_json::json!([0, k, 1.0]))).unwrap_err();
        assert!(err.to_string().contains("weight index out of range"), "{err}");
    }

    #[test]
    fn structural_errors() {
        let m = random_model(4, true, false, true, false);
        assert!(matches!(
            edit(&m, |v| v["format_version"] = 2.into()),
            Err(Error::UnsupportedVersion(2))
        ));
        assert!(edit(&m, |v| v["flags"]["dr"] = false.into()).is_err());
        assert!(edit(&m, |v| v["domain_stats"] = serde_json::json!([])).is_err());
        assert!(edit(&m, |v| v["dims"]["h"] = 99.into()).is_err());
        assert!(edit(&m, |v| v["bias"].as_array_mut().unwrap().pop().map(drop).unwrap_or(())).is_err());
        let g = random_model(4, false, false, false, true);
        assert!(edit(&g, |v| v.as_object_mut().unwrap().remove("gr_head").map(drop).unwrap_or(())).is_err());
    }

    #[test]
    fn foreign_stopword_hash_still_loads() {
        let m = random_model(5, false, false, false, false);
        let back = edit(&m, |v| v["tokenizer"]["stopwords_sha256"] = "0".repeat(64).into()).unwrap();
        assert!(!tokenizer_matches(&back));
        assert!(tokenizer_matches(&m));
    }

    #[test]
    fn g_format() {
        for (v, s) in [
            (0.0, "0"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.123456789, "0.123457"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (999999.5, "1e+06"),
        ] {
            assert_eq!(format_g(v), s, "{v}");
        }
    }

    fn lexicon_model() -> LinearModel {
        let mut m = random_model(11, false, false, false, false);
        m.labels = vec!["neg".into(), "pos".into()];
        m.vocab = Vocabulary::from_tokens(vec!["bad".into(), "good".into(), "meh".into()]).unwrap();
        m.weights = Weights::Dense(ndarray::array![[0.9, -0.9], [-0.5, 1.5], [0.0, 0.0]]);
        m.bias = Array1::zeros(2);
        m
    }

    #[test]
    fn lexicon_csv_layouts() {
        let m = lexicon_model();
        let mut out = Vec::new();
        write_lexicon_csv(&elicit_lexicon(&m, 1), &mut out, true).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "class,rank,token,weight\nneg,1,bad,0.9\npos,1,good,1.5\n");
        let mut out = Vec::new();
        write_lexicon_csv(&elicit_lexicon(&m, 2), &mut out, false).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "neg,pos\nbad,good\nmeh,meh\n");
    }

    #[test]
    fn export_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.csv");
        export_lexicon(&lexicon_model(), 3, &p, true).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }
}

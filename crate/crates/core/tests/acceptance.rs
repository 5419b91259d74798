//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line and
//! then asserts the same verdict. Tests hold a shared lock so runtimes are
//! measured without competing for cores.

use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use mda::adapt::{apply_dsn, estimate_label_distribution, two_fold_estimate, TwoFoldOptions};
use mda::corpus::{featurize, BinaryRows, Corpus, FeatureVector, TextPipeline, Vocabulary};
use mda::eval::{
    holdout_domain_protocol, mcnemar_exact, power_analysis, single_domain_protocol, EvalReport, HoldoutOutcome,
    PowerOptions, ProtocolOptions,
};
use mda::model::{collapse_weights, predict_proba, LinearModel, PredictionContext, Weights};
use mda::modelfmt::{from_json_str, to_canonical_json};
use mda::rng::SeededRng;
use mda::synth::{default_benchmark_spec, generate_corpus};
use mda::train::{
    batch_gradients, batch_loss, default_lambda_grid, train_full_batch, GridSearch, Technique, TrainConfig,
    TrainingSet,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line and fails the test unless both the check and the
/// runtime budget hold.
fn verdict(n: &str, what: &str, ok: bool, detail: String, elapsed: Duration, budget: Duration) {
    let in_time = elapsed < budget;
    let pass = ok && in_time;
    println!(
        "criterion {n:<3} {:<4} {what}: {detail} [{:.2}s, budget {:.0}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(ok, "criterion {n}: {detail}");
    assert!(in_time, "criterion {n}: {:.2}s exceeds {budget:?}", elapsed.as_secs_f64());
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn all_configs() -> Vec<TrainConfig> {
    let mut out = Vec::new();
    for t in [Technique::Base, Technique::Dr, Technique::Gr] {
        for dsb in [false, true] {
            for dsn in [false, true] {
                let mut c = TrainConfig::new(t, dsb, dsn);
                c.gr_weight = 0.7;
                if t == Technique::Gr {
                    c.rank = Some(4);
                }
                out.push(c);
            }
        }
    }
    out
}

fn random_set(rng: &mut SeededRng, n: usize, h: usize, k: usize, n_domains: usize) -> TrainingSet {
    let vocab = Vocabulary::from_tokens((0..h).map(|j| format!("w{}", (b'a' + j as u8) as char)).collect()).unwrap();
    let mut rows = BinaryRows::new(h);
    for _ in 0..n {
        rows.push((0..h).filter(|_| rng.chance(0.35)));
    }
    TrainingSet {
        labels: (0..k).map(|c| format!("c{c}")).collect(),
        domains: (0..n_domains).map(|d| format!("d{d}")).collect(),
        vocab,
        pipeline: TextPipeline::default(),
        rows,
        y: (0..n).map(|i| if i < k { i } else { rng.below(k) }).collect(),
        domain_of: (0..n).map(|i| i % n_domains).collect(),
        ids: (0..n).map(|i| format!("doc{i}")).collect(),
    }
}

/// A model with the right shapes and statistics for `config`, with every
/// parameter replaced by a random value.
fn random_model(data: &TrainingSet, config: &TrainConfig, rng: &mut SeededRng) -> LinearModel {
    let mut c = config.clone();
    c.max_iters = 1;
    let mut model = train_full_batch(data, &c).unwrap().model;
    let mut fill = |a: &mut Array2<f64>| a.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
    match &mut model.weights {
        Weights::Dense(w) => fill(w),
        Weights::Factorized { w1, w2, gr_head } => {
            fill(w1);
            fill(w2);
            fill(&mut gr_head.weights);
        }
    }
    if let Some(t) = &mut model.dr_bias_table {
        fill(t);
    }
    for b in model.bias.iter_mut() {
        *b = rng.uniform(-0.5, 0.5);
    }
    model
}

/// Central differences of the smooth objective for every parameter, in the
/// order bias, DR table, weights (W or W1, W2, head weights, head bias).
fn numeric_gradient(model: &LinearModel, data: &TrainingSet, config: &TrainConfig) -> Vec<f64> {
    let step = 1e-6;
    let objective = |m: &LinearModel, reversed: bool| {
        let l = batch_loss(m, data, config).unwrap();
        let sign = if reversed { -1.0 } else { 1.0 };
        l.label_ce + sign * config.gr_weight * l.domain_ce
    };
    let central = |f: &dyn Fn(&mut LinearModel, f64), reversed: bool| {
        let mut plus = model.clone();
        f(&mut plus, step);
        let mut minus = model.clone();
        f(&mut minus, -step);
        (objective(&plus, reversed) - objective(&minus, reversed)) / (2.0 * step)
    };
    let mut out = Vec::new();
    for c in 0..model.k() {
        out.push(central(&|m, d| m.bias[c] += d, false));
    }
    if let Some(t) = &model.dr_bias_table {
        for idx in ndarray::indices(t.dim()) {
            out.push(central(&|m, d| m.dr_bias_table.as_mut().unwrap()[idx] += d, false));
        }
    }
    match &model.weights {
        Weights::Dense(w) => {
            for idx in ndarray::indices(w.dim()) {
                out.push(central(
                    &|m, d| {
                        if let Weights::Dense(w) = &mut m.weights {
                            w[idx] += d
                        }
                    },
                    false,
                ));
            }
        }
        Weights::Factorized { w1, w2, gr_head } => {
            // the domain loss enters W1 reversed
            for idx in ndarray::indices(w1.dim()) {
                out.push(central(
                    &|m, d| {
                        if let Weights::Factorized { w1, .. } = &mut m.weights {
                            w1[idx] += d
                        }
                    },
                    true,
                ));
            }
            for idx in ndarray::indices(w2.dim()) {
                out.push(central(
                    &|m, d| {
                        if let Weights::Factorized { w2, .. } = &mut m.weights {
                            w2[idx] += d
                        }
                    },
                    false,
                ));
            }
            for idx in ndarray::indices(gr_head.weights.dim()) {
                out.push(central(
                    &|m, d| {
                        if let Weights::Factorized { gr_head, .. } = &mut m.weights {
                            gr_head.weights[idx] += d
                        }
                    },
                    false,
                ));
            }
            for i in 0..gr_head.bias.len() {
                out.push(central(
                    &|m, d| {
                        if let Weights::Factorized { gr_head, .. } = &mut m.weights {
                            gr_head.bias[i] += d
                        }
                    },
                    false,
                ));
            }
        }
    }
    out
}

fn analytic_gradient(model: &LinearModel, data: &TrainingSet, config: &TrainConfig) -> Vec<f64> {
    let g = batch_gradients(model, data, config).unwrap();
    let mut out: Vec<f64> = g.bias.to_vec();
    if let Some(t) = &g.dr_bias_table {
        out.extend(t.iter());
    }
    match &g.weights {
        Weights::Dense(w) => out.extend(w.iter()),
        Weights::Factorized { w1, w2, gr_head } => {
            out.extend(w1.iter());
            out.extend(w2.iter());
            out.extend(gr_head.weights.iter());
            out.extend(gr_head.bias.iter());
        }
    }
    out
}

#[test]
fn criterion_01_gradient_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut cases = 0;
    for seed in 0..5u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let data = random_set(&mut rng, 30, 12, 3, 3);
        for config in all_configs() {
            let model = random_model(&data, &config, &mut rng);
            let a = analytic_gradient(&model, &data, &config);
            let f = numeric_gradient(&model, &data, &config);
            assert_eq!(a.len(), f.len());
            for (x, y) in a.iter().zip(&f) {
                let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-6);
                if rel > worst.0 {
                    worst = (rel, format!("{} seed {seed}", config.name()));
                }
            }
            cases += 1;
        }
    }
    verdict(
        "1",
        "gradient oracle",
        worst.0 <= 1e-5,
        format!("{cases} configs x seeds, max relative error {:.2e} ({})", worst.0, worst.1),
        start.elapsed(),
        secs(10),
    );
}

#[test]
fn criterion_02_factorization_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = SeededRng::new(77);
    let data = random_set(&mut rng, 30, 12, 3, 3);
    let mut config = TrainConfig::new(Technique::Gr, false, false);
    config.rank = Some(4);
    for _ in 0..5 {
        let model = random_model(&data, &config, &mut rng);
        let Weights::Factorized { w1, w2, .. } = &model.weights else {
            panic!("factorized model expected")
        };
        let collapsed = collapse_weights(&model);
        assert!(!collapsed.weights.is_factorized());
        let predictor = collapsed.predictor(&PredictionContext::default(), None).unwrap();
        for _ in 0..100 {
            let positions: Vec<usize> = (0..model.h()).filter(|_| rng.chance(0.4)).collect();
            // b + (x W1) W2 evaluated directly
            let mut e = vec![0.0; w1.ncols()];
            for &j in &positions {
                for (q, v) in e.iter_mut().enumerate() {
                    *v += w1[[j, q]];
                }
            }
            let direct: Vec<f64> = (0..model.k())
                .map(|c| model.bias[c] + e.iter().enumerate().map(|(q, v)| v * w2[[q, c]]).sum::<f64>())
                .collect();
            let got = predictor.logits(&FeatureVector::binary(model.h(), positions));
            for (a, b) in direct.iter().zip(&got) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(
        "2",
        "factorization equivalence",
        worst <= 1e-12,
        format!("500 inputs, max abs logit difference {worst:.2e}"),
        start.elapsed(),
        secs(1),
    );
}

#[test]
fn criterion_03_simplex_and_ranges() {
    let _g = serial();
    let start = Instant::now();
    let cases = 1000;
    let runner = || {
        TestRunner::new(PropConfig {
            cases,
            failure_persistence: None,
            ..PropConfig::default()
        })
    };
    let softmax = runner().run(&prop::collection::vec(-800.0f64..800.0, 2..12), |z| {
        let p = predict_proba(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        Ok(())
    });
    let dsn = runner().run(
        &(1usize..40).prop_flat_map(|h| (prop::collection::vec(0.0f64..=1.0, h), prop::collection::vec(any::<bool>(), h))),
        |(means, present)| {
            let positions: Vec<usize> = present.iter().enumerate().filter(|(_, p)| **p).map(|(j, _)| j).collect();
            let out = apply_dsn(&FeatureVector::binary(means.len(), positions), &means);
            prop_assert!(out.entries().iter().all(|(_, v)| (-1.0..=1.0).contains(v)));
            Ok(())
        },
    );
    let smoothing = runner().run(
        &(2usize..10).prop_flat_map(|k| (Just(k), prop::collection::vec(0..k, 0..200), 1e-6f64..5.0)),
        |(k, samples, alpha)| {
            let d = estimate_label_distribution(&samples, k, alpha).unwrap();
            prop_assert!(d.probs.iter().all(|p| *p > 0.0));
            prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            Ok(())
        },
    );
    let failures: Vec<String> = [
        ("softmax", softmax.err().map(|e| e.to_string())),
        ("dsn", dsn.err().map(|e| e.to_string())),
        ("smoothing", smoothing.err().map(|e| e.to_string())),
    ]
    .into_iter()
    .filter_map(|(n, e)| e.map(|e| format!("{n}: {e}")))
    .collect();
    verdict(
        "3",
        "simplex and range properties",
        failures.is_empty(),
        if failures.is_empty() {
            format!("3 properties x {cases} cases")
        } else {
            failures.join("; ")
        },
        start.elapsed(),
        secs(5),
    );
}

fn benchmark() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| generate_corpus(&default_benchmark_spec()).unwrap())
}

#[test]
fn criterion_04_proximal_sparsity() {
    let _g = serial();
    let start = Instant::now();
    let corpus = benchmark();
    let data = TrainingSet::build(corpus, 5000, TextPipeline::default()).unwrap();
    let counts: Vec<usize> = default_lambda_grid()
        .into_iter()
        .map(|lambda| {
            let config = TrainConfig::new(Technique::Base, false, false).with_lambda(lambda);
            let m = train_full_batch(&data, &config).unwrap().model;
            m.weights.effective().iter().filter(|v| **v != 0.0).count()
        })
        .collect();
    verdict(
        "4",
        "proximal sparsity",
        counts.windows(2).all(|w| w[1] <= w[0]),
        format!("nonzero weights over the grid {counts:?}"),
        start.elapsed(),
        secs(60),
    );
}

/// Grid search settings of the benchmark protocol runs.
fn protocol_options() -> ProtocolOptions {
    ProtocolOptions {
        search: Some(GridSearch {
            grid: default_lambda_grid(),
            k_folds: 3,
        }),
        n_est: vec![100],
        est_trials: 5,
        ..ProtocolOptions::default()
    }
}

fn benchmark_configs() -> Vec<TrainConfig> {
    vec![
        TrainConfig::new(Technique::Base, false, false),
        TrainConfig::new(Technique::Base, true, false),
        TrainConfig::new(Technique::Base, true, true),
    ]
}

/// The held-out-domain run shared by criteria 5, 6 and 11, with its runtime.
fn holdout() -> &'static (HoldoutOutcome, Duration) {
    static RUN: OnceLock<(HoldoutOutcome, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let corpus = benchmark();
        let start = Instant::now();
        let out = holdout_domain_protocol(corpus, &benchmark_configs(), &protocol_options()).unwrap();
        (out, start.elapsed())
    })
}

fn row<'a>(reports: &'a [EvalReport], name: &str) -> &'a EvalReport {
    reports.iter().find(|r| r.config == name).unwrap_or_else(|| panic!("missing row {name}"))
}

#[test]
fn criterion_05_dsb_gain() {
    let _g = serial();
    let (out, elapsed) = holdout();
    let base = row(&out.reports, "LogReg Base").accuracy;
    let dsb = row(&out.reports, "LogReg DSB(oracle)").accuracy;
    let both = row(&out.reports, "LogReg DSN+DSB(oracle)").accuracy;
    let gain = 100.0 * (dsb - base);
    let dsn_drop = 100.0 * (dsb - both);
    verdict(
        "5",
        "synthetic DSB gain",
        gain >= 2.0 && dsn_drop <= 0.5,
        format!(
            "Base {:.2}, DSB(oracle) {:.2} (gain {gain:.2} >= 2.0), DSN+DSB(oracle) {:.2} (DSB - DSN+DSB = {dsn_drop:.2} <= 0.5)",
            100.0 * base,
            100.0 * dsb,
            100.0 * both
        ),
        *elapsed,
        secs(300),
    );
}

#[test]
fn criterion_06_estimation_curve() {
    let _g = serial();
    let (out, elapsed) = holdout();
    let oracle = row(&out.reports, "LogReg DSB(oracle)").accuracy;
    let est = row(&out.reports, "LogReg DSB(100)").accuracy;
    let gap = 100.0 * (oracle - est).abs();
    verdict(
        "6",
        "100-sample estimated distribution",
        gap <= 1.0,
        format!(
            "DSB(100) {:.2} vs DSB(oracle) {:.2}, |difference| {gap:.2} <= 1.0 (5 trials x 4 domains)",
            100.0 * est,
            100.0 * oracle
        ),
        *elapsed,
        secs(300),
    );
}

#[test]
fn criterion_07_two_fold_estimator() {
    let _g = serial();
    let start = Instant::now();
    let corpus = benchmark();
    let source = corpus.filter_domains(|d| d != "domain_a");
    let target = corpus.filter_domains(|d| d == "domain_a");
    let data = TrainingSet::build(&source, 5000, TextPipeline::default()).unwrap();
    let config = TrainConfig::new(Technique::Base, true, false).with_lambda(1.6e-4);
    let model = train_full_batch(&data, &config).unwrap().model;
    let fvs: Vec<FeatureVector> = target
        .documents()
        .iter()
        .map(|d| featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab))
        .collect();
    let golds = target.gold_labels().unwrap();

    // truth: DSB with the full target distribution over the whole domain
    let oracle = estimate_label_distribution(&golds, model.k(), 1.0).unwrap();
    let predictor = model
        .predictor(&PredictionContext::new(Some(oracle), None), None)
        .unwrap();
    let truth = fvs.iter().zip(&golds).filter(|(f, g)| predictor.predict(f) == **g).count() as f64 / fvs.len() as f64;

    let estimates = |budget: usize| -> Vec<f64> {
        (0..100u64)
            .map(|seed| {
                let idx = SeededRng::new(5000 + seed).sample_indices(fvs.len(), budget);
                let x: Vec<FeatureVector> = idx.iter().map(|&i| fvs[i].clone()).collect();
                let y: Vec<usize> = idx.iter().map(|&i| golds[i]).collect();
                let opts = TwoFoldOptions {
                    repeats: 1,
                    alpha: 1.0,
                    seed,
                };
                two_fold_estimate(&model, &x, &y, None, &opts).unwrap().mean
            })
            .collect()
    };
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (mean, sd)
    };
    let (m500, sd500) = stats(&estimates(500));
    let (_, sd1000) = stats(&estimates(1000));
    let se = sd500 / 100f64.sqrt();
    verdict(
        "7",
        "two-fold estimator",
        (m500 - truth).abs() <= 2.0 * se && sd1000 < sd500,
        format!(
            "truth {truth:.4}, mean estimate {m500:.4} (|diff| {:.4} <= 2 SE {:.4}), std {sd500:.4} at 500 -> {sd1000:.4} at 1000",
            (m500 - truth).abs(),
            2.0 * se
        ),
        start.elapsed(),
        secs(120),
    );
}

/// `C(n, i)` exactly.
fn choose(n: u64, i: u64) -> u128 {
    (0..i).fold(1u128, |acc, j| acc * u128::from(n - j) / u128::from(j + 1))
}

#[test]
fn criterion_08_mcnemar_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut tables = 0;
    for total in 0..=25u64 {
        for n01 in 0..=total {
            let n10 = total - n01;
            let tail: u128 = (0..=n01.min(n10)).map(|i| choose(total, i)).sum();
            let expected = (2.0 * tail as f64 / 2f64.powi(total as i32)).min(1.0);
            worst = worst.max((mcnemar_exact(n01, n10) - expected).abs());
            tables += 1;
        }
    }
    verdict(
        "8",
        "McNemar exact branch",
        worst < 1e-12,
        format!("{tables} tables, max abs error {worst:.2e}"),
        start.elapsed(),
        secs(1),
    );
}

#[test]
fn criterion_09_power_calibration() {
    let _g = serial();
    let start = Instant::now();
    let opts = PowerOptions::default();
    let null = power_analysis(0.7, 0.7, 0.9, &opts).unwrap().power;
    let big = power_analysis(
        0.7,
        0.8,
        0.9,
        &PowerOptions {
            n_test: 2400,
            ..opts
        },
    )
    .unwrap()
    .power;
    verdict(
        "9",
        "power calibration",
        (null - 0.05).abs() <= 0.01 && big >= 0.99,
        format!("null power {null:.4} (target 0.05 +/- 0.01), gap 0.10 at n=2400 power {big:.4} (>= 0.99)"),
        start.elapsed(),
        secs(30),
    );
}

fn mda(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_mda")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// synth -> train -> adapt -> eval-holdout in `dir`, returning the report.
fn pipeline(dir: &Path) -> Vec<u8> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let (data, model, ctx) = (p("bench.jsonl"), p("model.mda.json"), p("ctx.json"));
    mda(&["--seed", "7", "synth", "default-benchmark", "--n-docs", "150", "--out", &data]);
    let small = ["--folds", "3", "--max-iters", "300"];
    let mut train = vec!["--seed", "7", "train", "--data", &data, "--dsb", "--out", &model];
    train.extend(small);
    mda(&train);
    mda(&["adapt", "--model", &model, "--estimate-from", &data, "--out", &ctx]);
    let mut eval = vec!["--seed", "7", "--json", "eval-holdout", "--data", &data, "--test-count", "50", "--n-est", "25"];
    eval.extend(small);
    let mut report = mda(&eval);
    report.extend(std::fs::read(&ctx).unwrap());
    report
}

#[test]
fn criterion_10_round_trip_and_determinism() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = SeededRng::new(10);
    let data = random_set(&mut rng, 60, 12, 3, 3);
    let mut mismatched = Vec::new();
    for config in all_configs() {
        let mut c = config.clone();
        c.max_iters = 50;
        let model = train_full_batch(&data, &c).unwrap().model;
        let first = to_canonical_json(&model).unwrap();
        let second = to_canonical_json(&from_json_str(&first).unwrap()).unwrap();
        if first != second {
            mismatched.push(config.name());
        }
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let identical = pipeline(a.path()) == pipeline(b.path());
    verdict(
        "10",
        "round trip and determinism",
        mismatched.is_empty() && identical,
        format!(
            "12 configs re-saved, mismatches {mismatched:?}; pipeline reports byte-identical: {identical}"
        ),
        start.elapsed(),
        secs(120),
    );
}

#[test]
fn criterion_11_single_domain_amplification() {
    let _g = serial();
    let (out, holdout_time) = holdout();
    let start = Instant::now();
    let configs = &benchmark_configs()[..2];
    let single = single_domain_protocol(benchmark(), configs, &protocol_options()).unwrap();
    let elapsed = start.elapsed();
    let gap = |reports: &[EvalReport]| {
        100.0 * (row(reports, "LogReg DSB(oracle)").accuracy - row(reports, "LogReg Base").accuracy)
    };
    let (g_single, g_holdout) = (gap(&single), gap(&out.reports));
    verdict(
        "11",
        "single-domain amplification",
        g_single >= g_holdout - 0.5,
        format!(
            "DSB(oracle) - Base: single-domain {g_single:.2}, holdout {g_holdout:.2} (holdout run {:.0}s shared)",
            holdout_time.as_secs_f64()
        ),
        elapsed,
        secs(300),
    );
}

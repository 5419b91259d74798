use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{
    emit, AdaptArgs, ApplyArgs, Cli, CliError, CliResult, Command, ContextFile, CurveArgs, EstimateArgs, EvalArgs,
    Format, LexiconArgs, McnemarArgs, PowerArgs, PredictArgs, ProtocolArgs, SynthArgs, TrainArgs, TrainFlags,
};
use crate::adapt::{compute_dsn_stats, estimate_label_distribution, two_fold_estimate, LabelDistributionFile, TwoFoldOptions};
use crate::corpus::{featurize, load_jsonl, load_jsonl_with_schema, write_jsonl, Corpus, FeatureVector, LabelSchema, SplitSpec, TextPipeline};
use crate::eval::{
    accuracy, holdout_domain_protocol, labelprop_curve, mcnemar_test, power_analysis, single_domain_protocol, CurveOptions,
    DomainAccuracy, EvalReport, PairedOutcome, PowerOptions, ProtocolOptions, Table, EXACT_LIMIT,
};
use crate::model::{predict_proba, LinearModel, PredictionContext};
use crate::modelfmt::{lexicon_csv, load_model, save_model};
use crate::synth::{default_benchmark_spec, generate_corpus, SynthSpec};
use crate::train::{fit, GridSearch, Technique, TrainConfig, TrainingSet};

pub(super) fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    let format = cli.format();
    match &cli.command {
        Command::Train(a) => train(a, seed, format, out),
        Command::Adapt(a) => adapt(a, format, out),
        Command::Predict(a) => predict(a, format, out),
        Command::Eval(a) => eval(a, format, out),
        Command::EvalHoldout(a) => protocol(a, seed, format, out, true),
        Command::EvalSingleDomain(a) => protocol(a, seed, format, out, false),
        Command::EstimatePerf(a) => estimate_perf(a, seed, format, out),
        Command::LabelpropCurve(a) => curve(a, seed, format, out),
        Command::Lexicon(a) => lexicon(a, out),
        Command::Mcnemar(a) => mcnemar(a, format, out),
        Command::Power(a) => power(a, seed, format, out),
        Command::Synth(a) => synth(a, cli.seed, out),
    }
}

/// Parses `base`, `dsb`, `dsn+dsb`, `dr+dsn+dsb`, `gr+dsb`, ... into a
/// technique and DSB/DSN flags.
pub fn parse_config(spec: &str) -> Result<(Technique, bool, bool), CliError> {
    let (mut technique, mut dsb, mut dsn) = (None, false, false);
    for part in spec.split('+').map(|p| p.trim().to_ascii_lowercase()) {
        match part.as_str() {
            "dsb" if !dsb => dsb = true,
            "dsn" if !dsn => dsn = true,
            "base" | "dr" | "gr" if technique.is_none() => technique = part.parse::<Technique>().ok(),
            _ => return Err(CliError::Usage(format!("cannot parse configuration {spec:?}"))),
        }
    }
    Ok((technique.unwrap_or(Technique::Base), dsb, dsn))
}

fn config_from(technique: Technique, dsb: bool, dsn: bool, flags: &TrainFlags, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(technique, dsb, dsn);
    if let Some(l) = flags.lambda {
        c.lambda = l;
    }
    c.rank = flags.rank;
    c.gr_weight = flags.gr_weight;
    c.learning_rate = flags.learning_rate;
    c.max_iters = flags.max_iters;
    c.tol = flags.tol;
    c.vocab_size = flags.vocab_size;
    c.tweet_mode = flags.tweet_mode;
    c.seed = seed;
    c
}

fn search_from(flags: &TrainFlags) -> Option<GridSearch> {
    if flags.lambda.is_some() {
        return None;
    }
    let mut s = GridSearch {
        k_folds: flags.folds,
        ..GridSearch::default()
    };
    if let Some(g) = &flags.lambda_grid {
        s.grid = g.clone();
    }
    Some(s)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: String,
    lambda: f64,
    loss: crate::train::LossBreakdown,
    iterations: usize,
    converged: bool,
    search: Option<&'a crate::train::GridSearchResult>,
    model: &'a Path,
}

fn train(a: &TrainArgs, seed: u64, format: Format, out: &mut dyn Write) -> CliResult {
    let technique: Technique = a.technique.parse().map_err(|e: crate::Error| CliError::Usage(e.to_string()))?;
    let config = config_from(technique, a.dsb, a.dsn, &a.train, seed);
    config.validate()?;
    let corpus = load_jsonl(&a.data)?;
    let data = TrainingSet::build(&corpus, config.vocab_size, TextPipeline { tweet_mode: config.tweet_mode })?;
    let outcome = fit(&data, &config, search_from(&a.train).as_ref())?;
    let trained = &outcome.trained;
    save_model(&trained.model, &a.out)?;
    if let Some(path) = &a.log {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in &trained.history {
            writeln!(w, "{}", serde_json::to_string(entry)?)?;
        }
        w.flush()?;
    }
    let summary = TrainSummary {
        config: config.name(),
        lambda: trained.model.provenance.lambda,
        loss: trained.loss,
        iterations: trained.iterations,
        converged: trained.converged,
        search: outcome.search.as_ref(),
        model: &a.out,
    };
    let mut table = Table::new(["quantity", "value"]);
    table.push("lambda", [Some(summary.lambda)]);
    table.push("label_ce", [Some(trained.loss.label_ce)]);
    table.push("domain_ce", [Some(trained.loss.domain_ce)]);
    table.push("l1_penalty", [Some(trained.loss.l1_penalty)]);
    table.push("total", [Some(trained.loss.total)]);
    table.push("iterations", [Some(trained.iterations as f64)]);
    if !trained.converged {
        log::warn!("stopped after {} iterations without converging", trained.iterations);
    }
    emit(out, format, &summary, &table)
}

/// Loads a labeled or unlabeled corpus with the model's label order.
fn load_for(model: &LinearModel, path: &Path) -> CliResult<Corpus> {
    let schema = LabelSchema {
        labels: model.labels.clone(),
    };
    Ok(load_jsonl_with_schema(path, Some(&schema))?)
}

fn texts(c: &Corpus) -> Vec<&str> {
    c.documents().iter().map(|d| d.raw_text.as_str()).collect()
}

fn featurize_all(model: &LinearModel, c: &Corpus) -> Vec<FeatureVector> {
    c.documents()
        .iter()
        .map(|d| featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab))
        .collect()
}

fn adapt(a: &AdaptArgs, format: Format, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.model)?;
    let mut ctx = ContextFile {
        labels: model.labels.clone(),
        ..ContextFile::default()
    };
    if !model.flags.dsb && !model.flags.dsn {
        log::warn!("model uses neither domain-specific bias nor normalization; the context is empty");
    }
    if model.flags.dsb {
        ctx.label_dist = Some(match (&a.labels_json, &a.estimate_from) {
            (Some(p), None) => LabelDistributionFile::read(p)?.to_distribution(&model.labels)?,
            (None, Some(p)) => {
                let samples = load_for(&model, p)?;
                estimate_label_distribution(&samples.gold_labels()?, model.k(), a.alpha)?
            }
            _ => {
                return Err(CliError::Usage(
                    "model uses domain-specific bias: pass --labels-json or --estimate-from".into(),
                ))
            }
        });
    } else if a.labels_json.is_some() || a.estimate_from.is_some() {
        log::warn!("model has no domain-specific bias; ignoring the label distribution source");
    }
    if model.flags.dsn {
        let p = a
            .unlabeled
            .as_ref()
            .ok_or_else(|| CliError::Usage("model uses domain-specific normalization: pass --unlabeled".into()))?;
        let target = load_for(&model, p)?;
        ctx.dsn_means = Some(compute_dsn_stats(&texts(&target), &model.vocab, &model.pipeline)?);
    } else if a.unlabeled.is_some() {
        log::warn!("model has no domain-specific normalization; ignoring --unlabeled");
    }
    std::fs::write(&a.out, serde_json::to_string_pretty(&ctx)? + "\n")?;
    let mut table = Table::new(["label", "prob"]);
    if let Some(d) = &ctx.label_dist {
        for (l, p) in model.labels.iter().zip(&d.probs) {
            table.push(l.clone(), [Some(*p)]);
        }
    }
    emit(out, format, &ctx, &table)
}

fn read_context(model: &LinearModel, path: Option<&Path>) -> CliResult<PredictionContext> {
    let Some(path) = path else {
        return Ok(PredictionContext::default());
    };
    let ctx: ContextFile = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
    if ctx.labels != model.labels {
        return Err(CliError::Data(crate::Error::InvalidArgument(
            "context file was built for a model with different labels".into(),
        )));
    }
    Ok(PredictionContext::new(ctx.label_dist, ctx.dsn_means))
}

fn predictor_for(model: &LinearModel, a: &ApplyArgs) -> CliResult<crate::model::Predictor> {
    if let Some(d) = &a.domain {
        if model.domain_index(d).is_none() {
            return Err(CliError::Usage(format!("{d:?} is not a training domain of this model")));
        }
    }
    let ctx = read_context(model, a.context.as_deref())?;
    Ok(model.predictor(&ctx, a.domain.as_deref())?)
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    label: &'a str,
    probs: BTreeMap<&'a str, f64>,
}

fn predict(a: &PredictArgs, format: Format, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.apply.model)?;
    let predictor = predictor_for(&model, &a.apply)?;
    let corpus = load_for(&model, &a.data)?;
    let fvs = featurize_all(&model, &corpus);
    let rows: Vec<Prediction> = corpus
        .documents()
        .iter()
        .zip(&fvs)
        .map(|(d, fv)| {
            let probs = predict_proba(&predictor.logits(fv));
            Prediction {
                id: &d.id,
                label: &model.labels[predictor.predict(fv)],
                probs: model.labels.iter().map(String::as_str).zip(probs).collect(),
            }
        })
        .collect();
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
            w.write_record(["id", "label"])?;
            for r in &rows {
                w.write_record([r.id, r.label])?;
            }
            w.flush()?;
        }
        Format::Text => {
            for r in &rows {
                writeln!(out, "{}\t{}", r.id, r.label)?;
            }
        }
    }
    Ok(())
}

fn eval(a: &EvalArgs, format: Format, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.apply.model)?;
    let predictor = predictor_for(&model, &a.apply)?;
    let corpus = load_for(&model, &a.data)?;
    let golds = corpus.gold_labels()?;
    let preds: Vec<usize> = featurize_all(&model, &corpus).iter().map(|fv| predictor.predict(fv)).collect();
    let per_domain = corpus
        .domains()
        .iter()
        .map(|d| {
            let pos = corpus.domain_positions(d);
            let p: Vec<usize> = pos.iter().map(|&i| preds[i]).collect();
            let g: Vec<usize> = pos.iter().map(|&i| golds[i]).collect();
            Ok(DomainAccuracy {
                domain: d.clone(),
                accuracy: accuracy(&p, &g)?,
                n: pos.len(),
                improvement: None,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut report = EvalReport::new(format!("LogReg {}", model.technique_name()), per_domain);
    // a single report: the overall figure is over documents, not domains
    report.accuracy = accuracy(&preds, &golds)?;
    let mut table = Table::new(["domain", "acc", "n"]);
    for d in &report.per_domain {
        table.push(d.domain.clone(), [Some(d.accuracy), Some(d.n as f64)]);
    }
    table.push("all", [Some(report.accuracy), Some(golds.len() as f64)]);
    emit(out, format, &report, &table)
}

fn protocol(a: &ProtocolArgs, seed: u64, format: Format, out: &mut dyn Write, holdout: bool) -> CliResult {
    let configs = a
        .configs
        .iter()
        .map(|s| {
            let (t, dsb, dsn) = parse_config(s)?;
            Ok(config_from(t, dsb, dsn, &a.train, seed))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let split = match a.test_fraction {
        Some(f) => SplitSpec::fraction(f, seed),
        None => SplitSpec::count(a.test_count, seed),
    };
    let opts = ProtocolOptions {
        split,
        search: search_from(&a.train),
        n_est: a.n_est.clone(),
        est_trials: a.est_trials,
        alpha: a.alpha,
        seed,
    };
    let corpus = load_jsonl(&a.data)?;
    if holdout {
        let outcome = holdout_domain_protocol(&corpus, &configs, &opts)?;
        for audit in &outcome.audit {
            if audit.train_overlap + audit.estimation_overlap > 0 {
                log::error!("held-out {}: test documents leaked into training or estimation", audit.held_out);
            }
        }
        emit(out, format, &outcome, &Table::from_reports(&outcome.reports))
    } else {
        let reports = single_domain_protocol(&corpus, &configs, &opts)?;
        emit(out, format, &reports, &Table::from_reports(&reports))
    }
}

/// Feature means for a DSN model: from `unlabeled` when given, else from
/// `fallback`'s text.
fn dsn_means_for(model: &LinearModel, unlabeled: Option<&Path>, fallback: &Corpus) -> CliResult<Option<Vec<f64>>> {
    if !model.flags.dsn {
        return Ok(None);
    }
    let owned;
    let source = match unlabeled {
        Some(p) => {
            owned = load_for(model, p)?;
            &owned
        }
        None => fallback,
    };
    Ok(Some(compute_dsn_stats(&texts(source), &model.vocab, &model.pipeline)?))
}

fn estimate_perf(a: &EstimateArgs, seed: u64, format: Format, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.model)?;
    let samples = load_for(&model, &a.samples)?;
    let labels = samples.gold_labels()?;
    let means = dsn_means_for(&model, a.unlabeled.as_deref(), &samples)?;
    let opts = TwoFoldOptions {
        repeats: a.repeats,
        alpha: a.alpha,
        seed,
    };
    let est = two_fold_estimate(&model, &featurize_all(&model, &samples), &labels, means, &opts)?;
    let mut table = Table::new(["quantity", "value"]);
    table.push("mean", [Some(est.mean)]);
    table.push("std", [Some(est.std)]);
    table.push("n_samples", [Some(labels.len() as f64)]);
    emit(out, format, &est, &table)
}

fn curve(a: &CurveArgs, seed: u64, format: Format, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.model)?;
    let target = load_for(&model, &a.data)?;
    let labels = target.gold_labels()?;
    let means = dsn_means_for(&model, a.unlabeled.as_deref(), &target)?;
    let opts = CurveOptions {
        sample_sizes: a.sizes.clone(),
        trials: a.trials,
        alpha: a.alpha,
        seed,
    };
    let c = labelprop_curve(&model, &featurize_all(&model, &target), &labels, means, &opts)?;
    emit(out, format, &c, &Table::from_curve(&c))
}

fn lexicon(a: &LexiconArgs, out: &mut dyn Write) -> CliResult {
    let model = load_model(&a.model)?;
    let body = lexicon_csv(&model, a.top_n, !a.no_weights)?;
    match &a.out {
        Some(p) => std::fs::write(p, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct McnemarReport {
    table: PairedOutcome,
    discordant: u64,
    method: &'static str,
    p_value: f64,
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn mcnemar(a: &McnemarArgs, format: Format, out: &mut dyn Write) -> CliResult {
    let table = match (&a.pred_a, &a.pred_b, &a.gold) {
        (Some(pa), Some(pb), Some(g)) => {
            let (pa, pb, g) = (read_lines(pa)?, read_lines(pb)?, read_lines(g)?);
            let mut ids: BTreeMap<String, usize> = BTreeMap::new();
            let mut to_ids = |v: &[String]| -> Vec<usize> {
                v.iter()
                    .map(|s| {
                        let n = ids.len();
                        *ids.entry(s.clone()).or_insert(n)
                    })
                    .collect()
            };
            let (ia, ib, ig) = (to_ids(&pa), to_ids(&pb), to_ids(&g));
            PairedOutcome::from_predictions(&ia, &ib, &ig)?
        }
        _ => PairedOutcome {
            n00: a.n00,
            n01: a.n01.unwrap_or(0),
            n10: a.n10.unwrap_or(0),
            n11: a.n11,
        },
    };
    let report = McnemarReport {
        table,
        discordant: table.discordant(),
        method: if table.discordant() <= EXACT_LIMIT { "exact" } else { "chi2" },
        p_value: mcnemar_test(&table),
    };
    let mut t = Table::new(["quantity", "value"]);
    t.push("n01", [Some(table.n01 as f64)]);
    t.push("n10", [Some(table.n10 as f64)]);
    t.push(format!("p_value ({})", report.method), [Some(report.p_value)]);
    emit(out, format, &report, &t)
}

fn power(a: &PowerArgs, seed: u64, format: Format, out: &mut dyn Write) -> CliResult {
    let opts = PowerOptions {
        n_test: a.n,
        alpha: a.alpha,
        trials: a.trials,
        seed,
    };
    let r = power_analysis(a.acc_a, a.acc_b, a.agreement, &opts)?;
    let mut t = Table::new(["quantity", "value"]);
    t.push("power", [Some(r.power)]);
    for (name, v) in [("p11", r.cells.p11), ("p10", r.cells.p10), ("p01", r.cells.p01), ("p00", r.cells.p00)] {
        t.push(name, [Some(v)]);
    }
    emit(out, format, &r, &t)
}

fn synth(a: &SynthArgs, seed: Option<u64>, out: &mut dyn Write) -> CliResult {
    let mut spec = if a.spec == "default-benchmark" {
        default_benchmark_spec()
    } else {
        SynthSpec::from_json_file(&a.spec)?
    };
    if let Some(n) = a.n_docs {
        spec.n_docs = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = generate_corpus(&spec)?;
    match &a.out {
        Some(p) => write_jsonl(&corpus, std::io::BufWriter::new(std::fs::File::create(p)?))?,
        None => write_jsonl(&corpus, out)?,
    }
    Ok(())
}

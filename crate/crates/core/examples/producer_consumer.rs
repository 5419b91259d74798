//! The producer trains a DSN+DSB model and publishes only the model file.
//! The consumer loads it, supplies its own domain statistics and predicts,
//! without any access to the training text.
//!
//! ```text
//! cargo run --release --example producer_consumer
//! ```

use mda::adapt::{compute_dsn_stats, estimate_label_distribution, AdaptedModel};
use mda::corpus::{featurize, Corpus, TextPipeline};
use mda::eval::accuracy;
use mda::modelfmt::{load_model, save_model};
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn produce(source: &Corpus, path: &std::path::Path) -> anyhow::Result<()> {
    let data = TrainingSet::build(source, 5000, TextPipeline::default())?;
    let config = TrainConfig::new(Technique::Base, true, true).with_lambda(1e-4);
    save_model(&train_full_batch(&data, &config)?.model, path)?;
    Ok(())
}

fn consume(path: &std::path::Path, target: &Corpus) -> anyhow::Result<f64> {
    let model = load_model(path)?;
    let texts: Vec<&str> = target.documents().iter().map(|d| d.raw_text.as_str()).collect();
    let golds = target.gold_labels()?;
    // unlabeled text for normalization, 100 labels for the prior
    let means = compute_dsn_stats(&texts, &model.vocab, &model.pipeline)?;
    let dist = estimate_label_distribution(&golds[..100], model.k(), 1.0)?;
    let predictor = AdaptedModel::new(&model)
        .with_dsb(dist)?
        .with_dsn_means(means)?
        .predictor()?;
    let preds: Vec<usize> = texts
        .iter()
        .map(|t| predictor.predict(&featurize(&model.pipeline.tokens(t), &model.vocab)))
        .collect();
    Ok(accuracy(&preds, &golds)?)
}

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&SynthSpec::rotated(4, 4, 600, 11))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("sentiment.mda.json");

    produce(&corpus.filter_domains(|d| d != "domain_b"), &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("published {} ({bytes} bytes)", path.display());

    let acc = consume(&path, &corpus.filter_domains(|d| d == "domain_b"))?;
    println!("consumer accuracy on domain_b: {acc:.4}");
    Ok(())
}

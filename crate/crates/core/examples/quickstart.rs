//! Train a DSB classifier on three synthetic domains, then adapt it to an
//! unseen fourth domain from a handful of labeled target documents.
//!
//! ```text
//! cargo run --release --example quickstart
//! ```

use mda::adapt::{estimate_label_distribution, AdaptedModel};
use mda::corpus::{featurize, TextPipeline};
use mda::eval::accuracy;
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&SynthSpec::rotated(4, 4, 600, 7))?;
    let source = corpus.filter_domains(|d| d != "domain_d");
    let target = corpus.filter_domains(|d| d == "domain_d");

    let data = TrainingSet::build(&source, 5000, TextPipeline::default())?;
    let config = TrainConfig::new(Technique::Base, true, false).with_lambda(1e-4);
    let trained = train_full_batch(&data, &config)?;
    println!(
        "trained {} on {} documents: {} iterations, loss {:.4}",
        config.name(),
        data.len(),
        trained.iterations,
        trained.loss.total
    );
    let model = trained.model;

    // 50 labeled target documents give the label distribution
    let golds = target.gold_labels()?;
    let dist = estimate_label_distribution(&golds[..50], model.k(), 1.0)?;
    println!("estimated target distribution: {:.3?}", dist.probs);

    let predictor = AdaptedModel::new(&model).with_dsb(dist)?.predictor()?;
    let preds: Vec<usize> = target
        .documents()
        .iter()
        .map(|d| predictor.predict(&featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab)))
        .collect();
    println!("accuracy on domain_d: {:.4}", accuracy(&preds, &golds)?);
    Ok(())
}

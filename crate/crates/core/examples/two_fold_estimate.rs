//! Estimating how well a published DSB model will do on a new domain, from
//! one labeled sample, and comparing with the truth.
//!
//! ```text
//! cargo run --release --example two_fold_estimate
//! ```

use mda::adapt::{two_fold_estimate, AdaptedModel, TwoFoldOptions};
use mda::corpus::{featurize, FeatureVector, TextPipeline};
use mda::eval::accuracy;
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&SynthSpec::rotated(4, 4, 1000, 21))?;
    let source = corpus.filter_domains(|d| d != "domain_a");
    let target = corpus.filter_domains(|d| d == "domain_a");
    let data = TrainingSet::build(&source, 5000, TextPipeline::default())?;
    let model = train_full_batch(&data, &TrainConfig::new(Technique::Base, true, false).with_lambda(1e-4))?.model;

    let fvs: Vec<FeatureVector> = target
        .documents()
        .iter()
        .map(|d| featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab))
        .collect();
    let golds = target.gold_labels()?;

    for n in [100, 200, 400] {
        let est = two_fold_estimate(&model, &fvs[..n], &golds[..n], None, &TwoFoldOptions::default())?;
        println!("{n:>4} labeled: estimate {:.4} (std {:.4})", est.mean, est.std);
    }

    let est = two_fold_estimate(&model, &fvs[..400], &golds[..400], None, &TwoFoldOptions::default())?;
    let predictor = AdaptedModel::new(&model).with_dsb(est.full_distribution)?.predictor()?;
    let preds: Vec<usize> = fvs.iter().map(|fv| predictor.predict(fv)).collect();
    println!("actual accuracy on all {}: {:.4}", fvs.len(), accuracy(&preds, &golds)?);
    Ok(())
}

//! How many labeled target documents does DSB need? Accuracy against the
//! size of the sample the target label distribution is estimated from.
//!
//! ```text
//! cargo run --release --example label_distribution_curve
//! ```

use mda::corpus::{featurize, FeatureVector, TextPipeline};
use mda::eval::{labelprop_curve, CurveOptions, Table};
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&SynthSpec::rotated(4, 4, 1000, 3))?;
    let source = corpus.filter_domains(|d| d != "domain_c");
    let target = corpus.filter_domains(|d| d == "domain_c");
    let data = TrainingSet::build(&source, 5000, TextPipeline::default())?;
    let model = train_full_batch(&data, &TrainConfig::new(Technique::Base, true, false).with_lambda(1e-4))?.model;

    let fvs: Vec<FeatureVector> = target
        .documents()
        .iter()
        .map(|d| featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab))
        .collect();
    let opts = CurveOptions {
        sample_sizes: vec![5, 10, 25, 50, 100, 250, 500],
        trials: 10,
        ..CurveOptions::default()
    };
    let curve = labelprop_curve(&model, &fvs, &target.gold_labels()?, None, &opts)?;
    print!("{}", Table::from_curve(&curve).render_text());
    Ok(())
}

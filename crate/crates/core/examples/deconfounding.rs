//! Domain residualization and gradient reversal on a corpus where domain
//! words are confounded with the label, compared with Base on an unseen
//! domain.
//!
//! ```text
//! cargo run --release --example deconfounding
//! ```

use mda::corpus::{featurize, TextPipeline};
use mda::eval::accuracy;
use mda::model::PredictionContext;
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    // two strongly skewed source domains, a balanced target
    let mut spec = SynthSpec::rotated(2, 3, 800, 13);
    spec.priors = vec![vec![0.85, 0.15], vec![0.15, 0.85], vec![0.5, 0.5]];
    let corpus = generate_corpus(&spec)?;
    let source = corpus.filter_domains(|d| d != "domain_c");
    let target = corpus.filter_domains(|d| d == "domain_c");
    let data = TrainingSet::build(&source, 5000, TextPipeline::default())?;
    let golds = target.gold_labels()?;

    for technique in [Technique::Base, Technique::Dr, Technique::Gr] {
        let mut config = TrainConfig::new(technique, false, false).with_lambda(1e-5);
        config.max_iters = 1000;
        let model = train_full_batch(&data, &config)?.model;
        let predictor = model.predictor(&PredictionContext::default(), None)?;
        let preds: Vec<usize> = target
            .documents()
            .iter()
            .map(|d| predictor.predict(&featurize(&model.pipeline.tokens(&d.raw_text), &model.vocab)))
            .collect();
        // how much weight the domain-marker words carry
        let w = model.weights.effective();
        let background: f64 = model
            .vocab
            .tokens()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.starts_with("bkg"))
            .map(|(j, _)| w.row(j).iter().map(|v| v.abs()).sum::<f64>())
            .sum();
        println!(
            "{:<4} accuracy {:.4}  |W| on domain words {:.4}",
            config.name(),
            accuracy(&preds, &golds)?,
            background
        );
    }
    Ok(())
}

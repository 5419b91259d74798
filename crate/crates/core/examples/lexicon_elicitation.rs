//! Reading a word list off an L1-sparse model and using it as a
//! dictionary classifier with a tuned threshold.
//!
//! ```text
//! cargo run --release --example lexicon_elicitation
//! ```

use mda::adapt::tune_threshold;
use mda::corpus::TextPipeline;
use mda::model::{elicit_lexicon, lexicon_score, WordList};
use mda::modelfmt::lexicon_csv;
use mda::synth::{generate_corpus, SynthSpec};
use mda::train::{train_full_batch, Technique, TrainConfig, TrainingSet};

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&SynthSpec::rotated(2, 3, 800, 5))?;
    let source = corpus.filter_domains(|d| d != "domain_c");
    let target = corpus.filter_domains(|d| d == "domain_c");
    let data = TrainingSet::build(&source, 5000, TextPipeline::default())?;
    let model = train_full_batch(&data, &TrainConfig::new(Technique::Base, true, false).with_lambda(1e-3))?.model;

    let nonzero = model.weights.effective().iter().filter(|v| **v != 0.0).count();
    println!("{nonzero} nonzero weights out of {}", model.h() * model.k());
    print!("{}", lexicon_csv(&model, 5, true)?);

    // positive minus negative column, as a single signed list
    let list = WordList::class_difference(&model, 1, 0);
    let lexicon = elicit_lexicon(&model, 12);
    println!("class_b top words: {:?}", lexicon.entries[1].iter().map(|(t, _)| t).collect::<Vec<_>>());

    let pipeline = TextPipeline::default();
    let scores: Vec<f64> = target
        .documents()
        .iter()
        .map(|d| lexicon_score(&list, &pipeline.tokens(&d.raw_text)))
        .collect();
    let positive: Vec<bool> = target.documents().iter().map(|d| d.label == Some(1)).collect();
    let (threshold, acc) = tune_threshold(&scores, &positive)?;
    println!("dictionary classifier on domain_c: threshold {threshold:.4}, accuracy {acc:.4}");
    Ok(())
}

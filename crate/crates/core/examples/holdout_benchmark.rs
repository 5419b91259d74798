//! Held-out-domain evaluation of Base, DSB and DSN+DSB on the synthetic
//! benchmark.
//!
//! ```text
//! cargo run --release --example holdout_benchmark
//! ```

use std::time::Instant;

use mda::eval::{holdout_domain_protocol, ProtocolOptions, Table};
use mda::synth::{default_benchmark_spec, generate_corpus};
use mda::train::{Technique, TrainConfig};

fn main() -> anyhow::Result<()> {
    let corpus = generate_corpus(&default_benchmark_spec())?;
    let configs = [
        TrainConfig::new(Technique::Base, false, false),
        TrainConfig::new(Technique::Base, true, false),
        TrainConfig::new(Technique::Base, true, true),
    ];
    let start = Instant::now();
    let outcome = holdout_domain_protocol(&corpus, &configs, &ProtocolOptions::default())?;
    print!("{}", Table::from_reports(&outcome.reports).render_text());
    for t in &outcome.models {
        println!("{} without {}: lambda {:e}", t.config, t.held_out, t.lambda);
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

//! McNemar's test on two classifiers' paired predictions, and the power of
//! the test for a planned evaluation.
//!
//! ```text
//! cargo run --release --example significance
//! ```

use mda::eval::{mcnemar_test, power_analysis, PairedOutcome, PowerOptions};

fn main() -> anyhow::Result<()> {
    let gold = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1, 1];
    let a = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1, 0];
    let b = [1, 1, 0, 0, 0, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 0];
    let table = PairedOutcome::from_predictions(&a, &b, &gold)?;
    println!(
        "n01 {} n10 {} agreement {:.3}: p = {:.6}",
        table.n01,
        table.n10,
        table.agreement(),
        mcnemar_test(&table)
    );

    for n in [500, 1000, 2000, 4000] {
        let opts = PowerOptions {
            n_test: n,
            trials: 2000,
            ..PowerOptions::default()
        };
        let r = power_analysis(0.80, 0.83, 0.85, &opts)?;
        println!("acc 0.80 vs 0.83, agreement 0.85, n = {n:>4}: power {:.3}", r.power);
    }
    Ok(())
}

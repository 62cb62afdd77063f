//! Full protocol on a synthetic corpus: 10 folds, one test fold, nine
//! train/validate rounds, one shared threshold.
//!
//! cargo run --release --example cross_validation -- [n_calls] [seed]

use std::time::Instant;

use holdscan::corpus::{generate_synthetic, stratified_split, GeneratorProfile, SplitMode};
use holdscan::tuning::run_cross_validation;
use holdscan::{FeatureSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let n_calls = args.get(1).map_or(Ok(1000), |s| s.parse())?;
    let seed = args.get(2).map_or(Ok(42), |s| s.parse())?;

    let started = Instant::now();
    let (corpus, _) = generate_synthetic(n_calls, seed, &GeneratorProfile::default())?;
    let plan = stratified_split(&corpus, 10, seed, SplitMode::Row)?;
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let run = run_cross_validation(&corpus, &plan, &config, &FeatureSpec::default())?;

    println!(
        "{} turns, class counts {:?}",
        corpus.num_turns(),
        corpus.class_counts()
    );
    println!(
        "shared threshold {:.4} (validation F1 {:.4})",
        run.shared_threshold, run.validation_mean_f1
    );
    print!("{}", run.to_table());
    println!("elapsed {:.1?}", started.elapsed());
    Ok(())
}

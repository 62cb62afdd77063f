//! Sweeps the weight of the irrelevant class, one full cross-validation per
//! value, and marks the value with the best mean test F1-macro.
//!
//! cargo run --release --example hyperparameter_sweep

use holdscan::corpus::{generate_synthetic, stratified_split, GeneratorProfile, SplitMode};
use holdscan::tuning::{sweep, SweepGrid};
use holdscan::{FeatureSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = generate_synthetic(300, 5, &GeneratorProfile::default())?;
    let plan = stratified_split(&corpus, 5, 5, SplitMode::Row)?;
    let grid = SweepGrid::parse("class_weights", &["0.05", "0.1", "0.5", "1.0"])?;
    let base = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let (result, _) = sweep(&corpus, &plan, &base, &FeatureSpec::default(), &grid)?;
    print!("{}", result.to_table());
    println!("best: {}", result.best_row().value);
    Ok(())
}

//! Runs the cross-validation protocol on probabilities produced by some other
//! model. Here the "other model" is simulated by noisy gold labels written to
//! a predictions CSV and read back, as a fine-tuned transformer's output would be.
//!
//! cargo run --release --example external_probabilities

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holdscan::classifier::{read_external_proba, write_predictions};
use holdscan::corpus::{
    generate_synthetic, stratified_split, GeneratorProfile, SplitMode, TurnKey,
};
use holdscan::tuning::run_cross_validation_external;
use holdscan::ProbTriple;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = generate_synthetic(600, 9, &GeneratorProfile::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<(TurnKey, ProbTriple)> = corpus
        .turns()
        .map(|t| {
            let mut z: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            z[t.label.expect("synthetic turns are labeled").index()] += 2.5;
            (TurnKey::of(t), ProbTriple::from_logits(z))
        })
        .collect();
    let mut csv = Vec::new();
    write_predictions(&mut csv, rows.iter().map(|(k, p)| (k, p)), None)?;
    let proba = read_external_proba(csv.as_slice())?;

    let plan = stratified_split(&corpus, 10, 9, SplitMode::Row)?;
    let run = run_cross_validation_external(&corpus, &plan, &proba)?;
    println!(
        "shared threshold {:.4}, validation F1-macro {:.4}",
        run.shared_threshold, run.validation_mean_f1
    );
    print!("{}", run.to_table());
    Ok(())
}

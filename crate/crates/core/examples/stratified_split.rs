//! Stratified fold assignment: row mode deals each class round-robin so every
//! fold gets the floor or ceiling of its share; call-grouped mode keeps calls
//! whole at the price of looser balance.
//!
//! cargo run --release --example stratified_split

use holdscan::cli::fold_table;
use holdscan::corpus::{generate_synthetic, stratified_split, GeneratorProfile, SplitMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = generate_synthetic(1000, 42, &GeneratorProfile::default())?;
    let labels = corpus.gold_labels()?;
    for mode in [SplitMode::Row, SplitMode::CallGrouped] {
        let plan = stratified_split(&corpus, 10, 7, mode)?;
        println!("{mode:?} mode");
        print!("{}", fold_table(&plan, &labels));
        let counts = plan.class_counts(&labels);
        let totals = corpus.class_counts();
        let worst = (0..3)
            .map(|c| {
                let share = totals[c] as f64 / plan.k as f64;
                counts
                    .iter()
                    .map(|row| (row[c] as f64 - share).abs() / share)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        println!(
            "largest relative deviation from an even share: {:.1}%\n",
            100.0 * worst
        );
    }
    Ok(())
}

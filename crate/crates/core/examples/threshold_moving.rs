//! The decision rule and the shared-threshold search on a small hand-made
//! case, printing the F1-macro reached at every candidate threshold.
//!
//! cargo run --example threshold_moving

use holdscan::corpus::Label::{self, Closing, Irrelevant, Opening};
use holdscan::decision::{decide_batch, script_mass};
use holdscan::metrics::{confusion, f1_macro};
use holdscan::tuning::{shared_threshold_search, threshold_candidates, FoldPredictions};
use holdscan::{DecisionRule, ProbTriple};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let probs = vec![
        ProbTriple::new(0.8, 0.15, 0.05)?,
        ProbTriple::new(0.4, 0.5, 0.1)?,
        ProbTriple::new(0.7, 0.2, 0.1)?,
        ProbTriple::new(0.1, 0.2, 0.7)?,
    ];
    let truth = vec![Irrelevant, Opening, Irrelevant, Closing];

    let argmax: Vec<Label> = probs.iter().map(ProbTriple::argmax).collect();
    println!("plain argmax:        {argmax:?}");
    for p in &probs {
        println!("  {:?}  p1 + p2 = {:.2}", p.to_array(), script_mass(p));
    }

    let folds = [FoldPredictions::new(probs.clone(), truth.clone())?];
    println!("\ncandidate   predictions                              F1-macro");
    for tau in threshold_candidates(&folds) {
        let predicted = decide_batch(&probs, &DecisionRule { threshold: tau });
        let f1 = f1_macro(&confusion(&truth, &predicted)?);
        println!("{tau:<11.4} {:<40} {f1:.4}", format!("{predicted:?}"));
    }
    let best = shared_threshold_search(&folds)?;
    println!(
        "\nchosen threshold {} with F1-macro {}",
        best.threshold, best.mean_f1
    );
    Ok(())
}

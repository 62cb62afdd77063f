//! The metric suite: confusion matrix, macro precision/recall/F1, balanced
//! accuracy and one-vs-rest macro ROC AUC.
//!
//! cargo run --example metrics

use holdscan::corpus::Label::{Closing, Irrelevant, Opening};
use holdscan::decision::decide_batch;
use holdscan::metrics::{confusion, evaluate, macro_prf, roc_auc_ovr_macro};
use holdscan::{DecisionRule, ProbTriple};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = [Irrelevant, Opening, Irrelevant, Closing];
    let predicted = [Irrelevant, Opening, Opening, Closing];
    let cm = confusion(&truth, &predicted)?;
    println!("confusion (rows = truth, columns = predicted): {:?}", cm.0);
    let s = macro_prf(&cm)?;
    println!(
        "precision {:.4}  recall {:.4}  F1 {:.4}  balanced accuracy {:.4}  accuracy {:.4}",
        s.precision, s.recall, s.f1, s.balanced_accuracy, s.accuracy
    );

    let probs = [
        ProbTriple::new(0.8, 0.15, 0.05)?,
        ProbTriple::new(0.4, 0.5, 0.1)?,
        ProbTriple::new(0.7, 0.2, 0.1)?,
        ProbTriple::new(0.1, 0.2, 0.7)?,
    ];
    println!(
        "\nROC AUC (macro, one-vs-rest): {:.4}",
        roc_auc_ovr_macro(&truth, &probs)?
    );
    for tau in [0.25, 0.6, 0.95] {
        let rule = DecisionRule::new(tau)?;
        println!("threshold {tau}: {:?}", decide_batch(&probs, &rule));
        println!("  {:?}", evaluate(&truth, &probs, &rule)?);
    }
    Ok(())
}

//! Trains the hashed n-gram baseline on part of a synthetic corpus, picks the
//! best epoch by validation ROC AUC, saves and reloads it, and scores a few
//! unseen sentences.
//!
//! cargo run --release --example train_baseline

use holdscan::classifier::{predict_proba, read_model, select_best_checkpoint, train, write_model};
use holdscan::corpus::{
    generate_synthetic, stratified_split, Channel, GeneratorProfile, PhraseTurn, SplitMode,
};
use holdscan::{FeatureSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = generate_synthetic(400, 1, &GeneratorProfile::default())?;
    let plan = stratified_split(&corpus, 5, 1, SplitMode::Row)?;
    let turns: Vec<&PhraseTurn> = corpus.turns().collect();
    let folds = plan.folds();
    let (mut train_set, mut validation) = (Vec::new(), Vec::new());
    for (turn, fold) in turns.iter().zip(folds) {
        if fold == 1 {
            validation.push(*turn)
        } else if fold != 0 {
            train_set.push(*turn)
        }
    }

    let spec = FeatureSpec::default();
    let config = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let checkpoints = train(&train_set, &config, &spec, &validation)?;
    for cp in &checkpoints {
        println!(
            "epoch {}: train loss {:.5}, validation ROC AUC {:.5}",
            cp.epoch, cp.train_loss, cp.validation_auc
        );
    }
    let best = select_best_checkpoint(&checkpoints)?;
    println!("best epoch {}", best.epoch);

    let mut file = Vec::new();
    write_model(best, &mut file, Some("example model"))?;
    let reloaded = read_model(file.as_slice())?;
    println!(
        "model file {} bytes, reload identical: {}",
        file.len(),
        &reloaded == best
    );

    let samples = [
        "could you hold the line for a moment please",
        "thank you so much for waiting",
        "my bill is wrong this month",
    ];
    let unseen: Vec<PhraseTurn> = samples
        .iter()
        .enumerate()
        .map(|(i, text)| PhraseTurn {
            call_id: "demo".into(),
            turn_index: i as u32,
            channel: Channel::Agent,
            start_ms: 0,
            end_ms: 1,
            text: text.to_string(),
            label: None,
        })
        .collect();
    let refs: Vec<&PhraseTurn> = unseen.iter().collect();
    for (text, p) in samples.iter().zip(predict_proba(&reloaded, &refs, &spec)?) {
        println!(
            "{:<45} p = [{:.3}, {:.3}, {:.3}]",
            text,
            p.p0(),
            p.p1(),
            p.p2()
        );
    }
    Ok(())
}

//! Generates a synthetic corpus and shows how closely it tracks the
//! calibration targets: turns per call, class shares, and how many calls
//! carry a given number of opening and closing scripts.
//!
//! cargo run --release --example generate_corpus -- [n_calls] [seed]

use holdscan::corpus::{generate_synthetic, GeneratorProfile, Label, JOINT_SCRIPT_COUNTS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let n_calls: usize = args.get(1).map_or(Ok(1000), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(Ok(42), |s| s.parse())?;

    let (corpus, ledger) = generate_synthetic(n_calls, seed, &GeneratorProfile::default())?;
    let counts = corpus.class_counts();
    let turns = corpus.num_turns() as f64;
    println!(
        "{} calls, {} turns ({:.1} per call)",
        corpus.calls.len(),
        corpus.num_turns(),
        turns / n_calls as f64
    );
    for label in Label::ALL {
        let n = counts[label.index()];
        println!(
            "  {:<10} {:>6}  {:>6.3}%",
            label.name(),
            n,
            100.0 * n as f64 / turns
        );
    }
    println!("target opening share {:.3}%", 100.0 * 463.0 / 37_297.0);

    let mut joint = vec![vec![0usize; JOINT_SCRIPT_COUNTS[0].len()]; JOINT_SCRIPT_COUNTS.len()];
    for call in &corpus.calls {
        let count = |l| call.turns.iter().filter(|t| t.label == Some(l)).count();
        joint[count(Label::Opening)][count(Label::Closing)] += 1;
    }
    let target_total: u64 = JOINT_SCRIPT_COUNTS.iter().flatten().sum();
    println!("\ncalls by (openings, closings): generated vs expected");
    for (o, row) in joint.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, n)| {
                let expected =
                    JOINT_SCRIPT_COUNTS[o][c] as f64 * n_calls as f64 / target_total as f64;
                format!("{n:>4}/{expected:<6.1}")
            })
            .collect();
        println!("  {o}: {}", cells.join(" "));
    }

    let s = ledger.summary();
    println!(
        "\nplanted violations: {} missing opening, {} missing closing, {} unregistered",
        s.missing_opening, s.missing_closing, s.unregistered_hold
    );
    let call = corpus
        .calls
        .iter()
        .find(|c| !c.holds.is_empty())
        .expect("some call has a hold");
    println!("\nfirst call with a hold ({}):", call.call_id);
    for t in call
        .turns
        .iter()
        .filter(|t| t.label.is_some_and(Label::is_script))
    {
        println!(
            "  [{:>7}-{:>7}] {} {:?}",
            t.start_ms,
            t.end_ms,
            t.label.unwrap(),
            t.text
        );
    }
    for h in &call.holds {
        println!("  hold [{}, {}]", h.hold_start_ms, h.hold_end_ms);
    }
    Ok(())
}

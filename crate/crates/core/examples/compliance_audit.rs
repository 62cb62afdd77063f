//! Audits hold compliance. First with gold labels on a synthetic corpus, where
//! the findings must equal the violations the generator planted; then on a
//! hand-written call to show the per-hold verdicts.
//!
//! cargo run --release --example compliance_audit

use holdscan::compliance::{audit_call, audit_corpus, gold_predictions, AuditConfig};
use holdscan::corpus::Label::{Closing, Irrelevant, Opening};
use holdscan::corpus::{
    generate_synthetic, Call, Channel, GeneratorProfile, HoldInterval, PhraseTurn,
};

fn turn(index: u32, start_ms: u64, end_ms: u64, text: &str) -> PhraseTurn {
    PhraseTurn {
        call_id: "demo".into(),
        turn_index: index,
        channel: Channel::Agent,
        start_ms,
        end_ms,
        text: text.into(),
        label: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = AuditConfig::default();
    let profile = GeneratorProfile::default();
    let (corpus, ledger) = generate_synthetic(500, 3, &profile)?;
    let audit = audit_corpus(&corpus, &gold_predictions(&corpus)?, &config)?;
    println!("planted {:?}", ledger.summary());
    println!("found   {:?}", audit.summary);
    println!("identical violation sets: {}\n", audit.ledger() == ledger);

    let call = Call {
        call_id: "demo".into(),
        turns: vec![
            turn(0, 0, 4_000, "my router keeps dropping"),
            turn(1, 92_000, 97_000, "please hold while i check"),
            turn(2, 161_000, 163_000, "thanks for waiting"),
            turn(3, 300_000, 304_000, "one moment please"),
        ],
        holds: vec![
            HoldInterval::new(100_000, 160_000)?,
            HoldInterval::new(400_000, 420_000)?,
        ],
    };
    let predicted = [Irrelevant, Opening, Closing, Opening];
    print!("{}", audit_call(&call, &predicted, &config)?.to_text());
    Ok(())
}

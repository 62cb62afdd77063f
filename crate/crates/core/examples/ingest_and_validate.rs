//! Reads transcripts and holds from CSV, reports every problem in a broken
//! file with its line number, and round-trips a corpus through the writer.
//!
//! cargo run --example ingest_and_validate

use holdscan::corpus::{
    read_holds, read_transcripts, validate_transcripts, write_transcripts, ColumnMapping,
};

const GOOD: &str = "\
call_id,turn_index,channel,start_ms,end_ms,text,label
c1,0,client,0,2500,hello my internet is down,0
c1,1,agent,2600,5200,one moment please stay on the line,1
c1,2,agent,70000,72500,thank you for waiting,2
c2,0,agent,0,1800,good afternoon how can i help,0
";

const BROKEN: &str = "\
call_id,turn_index,channel,start_ms,end_ms,text,label
c1,0,client,0,2500,hello,0
c1,1,agent,5200,2600,end before start,1
c1,1,agent,6000,7000,duplicate index,0
c2,0,robot,0,1800,unknown channel,0
c2,1,agent,2000,3000,bad label,7
";

const HOLDS: &str = "\
call_id,hold_start_ms,hold_end_ms
c1,6000,69000
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mapping = ColumnMapping::default();
    let mut corpus = read_transcripts(GOOD.as_bytes(), &mapping)?;
    for (call_id, holds) in read_holds(HOLDS.as_bytes())? {
        if let Some(call) = corpus.calls.iter_mut().find(|c| c.call_id == call_id) {
            call.holds = holds;
        }
    }
    println!(
        "good file: {} calls, {} turns, class counts {:?}",
        corpus.calls.len(),
        corpus.num_turns(),
        corpus.class_counts()
    );
    println!("holds on c1: {:?}", corpus.call("c1").map(|c| &c.holds));

    let mut buf = Vec::new();
    write_transcripts(&corpus, &mut buf, Some("written by the ingest example"))?;
    let again = read_transcripts(buf.as_slice(), &mapping)?;
    let same = again
        .calls
        .iter()
        .zip(&corpus.calls)
        .all(|(a, b)| a.turns == b.turns);
    println!("round trip preserves every turn: {same}");

    println!("\nbroken file:");
    match validate_transcripts(BROKEN.as_bytes(), &mapping) {
        Ok(_) => println!("  unexpectedly clean"),
        Err(diagnostics) => {
            for d in diagnostics {
                match d.line {
                    Some(line) => println!("  line {line}: {}", d.error),
                    None => println!("  {}", d.error),
                }
            }
        }
    }
    Ok(())
}

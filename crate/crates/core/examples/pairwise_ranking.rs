//! Rank documents from sparse pairwise judgements, some of them wrong.

use std::collections::HashMap;

use scirag::eval::{find_cycles, min_pairs, oracle_records, sample_pairs, sort_by_comparisons, SortConfig};
use scirag::ingest::DocId;

fn main() -> anyhow::Result<()> {
    let docs: Vec<DocId> = (0..40).map(|i| DocId(format!("paper-{i:02}"))).collect();
    // Hidden impact score; higher wins.
    let impact: HashMap<DocId, f64> = docs.iter().enumerate().map(|(i, d)| (d.clone(), ((i * 7) % 40) as f64)).collect();

    let n_pairs = 4 * min_pairs(docs.len());
    let pairs = sample_pairs(&docs, n_pairs, 3)?;
    let mut records = oracle_records(&pairs, &impact)?;
    for r in records.iter_mut().step_by(12) {
        let loser = r.loser().clone();
        r.winner = loser;
    }
    println!("{} judgements, {} cycles", records.len(), find_cycles(&records).len());

    let state = sort_by_comparisons(&records, &docs, &SortConfig::default())?;
    println!(
        "misordered {} -> {} ({:.1}%) in {} passes",
        state.initial_misordered,
        state.misordered_count,
        100.0 * state.misordered_fraction().unwrap_or(0.0),
        state.passes
    );
    for (i, d) in state.ordering.iter().rev().take(5).enumerate() {
        println!("{:>2}. {} (impact {})", i + 1, d.0, impact[d]);
    }
    Ok(())
}

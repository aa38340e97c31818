//! Builds a temporally grounded memory for one social-media candidate:
//! horizon filtering, the temporal knowledge graph, episode bucketing, and
//! the rendered memory cards.
//!
//! ```bash
//! cargo run --example build_memory
//! ```

use std::path::Path;

use deprofile::coc::{build_memory, CocConfig, Relation};
use deprofile::corpus::{load_candidates, threshold_timeline, IngestConfig};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ingest = IngestConfig::default();
    let mut candidates = load_candidates(&fixtures.join("candidates.jsonl"), &ingest)?.records;
    let candidate = candidates
        .iter_mut()
        .find(|c| c.id == "u01")
        .expect("bundled corpus has candidate u01");
    candidate.symptom_timeline =
        threshold_timeline(&candidate.symptom_timeline, ingest.score_threshold)?;
    candidate.event_timeline =
        threshold_timeline(&candidate.event_timeline, ingest.score_threshold)?;

    // 90-day horizon anchored at the latest item, 7-day episode buckets.
    let config = CocConfig::default();
    let memory = build_memory(candidate, &config, None)?;
    println!(
        "anchor day {} (horizon {} days, window {} days)",
        memory.anchor_day, config.horizon_days, config.window_days
    );

    println!("\ngraph nodes:");
    for node in &memory.graph.nodes {
        println!(
            "  {}  day {:>4}  {:<14}  {:?} {}",
            node.id, node.timestamp_day, node.time_norm.relative_label, node.kind, node.label
        );
    }
    println!("\ngraph edges:");
    for edge in &memory.graph.edges {
        let arrow = match edge.relation {
            Relation::TemporalPrecedes => "precedes",
            Relation::Persists => "persists",
        };
        println!("  {} -{}-> {}", edge.from, arrow, edge.to);
    }

    println!("\nmemory cards (most recent episode first):");
    for card in &memory.cards {
        println!("  episode {:>2}  [{}]", card.episode_id, card.time_range);
        println!("    {}", card.card_text);
    }
    Ok(())
}

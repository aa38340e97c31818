//! Loads the bundled demo corpus: counseling skeletons, assessment
//! skeletons, and social-media candidates. Shows strict vs lenient loading
//! and confidence thresholding of candidate timelines.
//!
//! ```bash
//! cargo run --example ingest_corpus
//! ```

use std::path::Path;

use deprofile::corpus::{load_candidates, load_skeletons, threshold_timeline, IngestConfig};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = IngestConfig::default();

    let counseling = load_skeletons(&fixtures.join("counseling.jsonl"), &config)?;
    let assessment = load_skeletons(&fixtures.join("assessment.jsonl"), &config)?;
    let candidates = load_candidates(&fixtures.join("candidates.jsonl"), &config)?;
    println!(
        "loaded {} counseling skeletons, {} assessment skeletons, {} candidates",
        counseling.records.len(),
        assessment.records.len(),
        candidates.records.len()
    );

    let first = &counseling.records[0];
    println!(
        "\n{}: {} positive symptoms, {} counseling snippets, personality {:?}",
        first.id,
        first.symptoms.positives().len(),
        first.counseling_snippets.len(),
        first.personality.as_array()
    );

    // Candidate timelines carry classifier confidences; the ingest stage
    // keeps only items at or above the configured threshold.
    let candidate = &candidates.records[0];
    let kept = threshold_timeline(&candidate.symptom_timeline, config.score_threshold)?;
    println!(
        "\n{}: {} symptom mentions, {} survive the {:.2} threshold",
        candidate.id,
        candidate.symptom_timeline.len(),
        kept.len(),
        config.score_threshold
    );
    for item in &kept {
        println!("  day {:>4}  {:.2}  {}", item.day, item.score, item.label);
    }

    // Lenient mode skips invalid records instead of failing; the skip
    // report says which lines were dropped and why.
    let lenient = IngestConfig { strict: false, ..config };
    let reloaded = load_skeletons(&fixtures.join("counseling.jsonl"), &lenient)?;
    println!(
        "\nlenient reload: {} records, {} skipped lines",
        reloaded.records.len(),
        reloaded.skipped.len()
    );
    Ok(())
}

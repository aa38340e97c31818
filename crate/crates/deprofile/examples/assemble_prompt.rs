//! Assembles patient system prompts from tagged components and shows how
//! ablation variants include or drop blocks. Components always render in
//! the fixed B, R, P, S, A, C, T order.
//!
//! ```bash
//! cargo run --example assemble_prompt
//! ```

use std::path::Path;

use deprofile::align::{match_stage1, SymptomTaxonomyMap};
use deprofile::coc::{build_memory, CocConfig};
use deprofile::corpus::{load_candidates, load_skeletons, threshold_timeline, IngestConfig};
use deprofile::promptkit::{ablation_tags, assemble_prompt, parse_tags, PromptInputs};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ingest = IngestConfig::default();
    let counseling = load_skeletons(&fixtures.join("counseling.jsonl"), &ingest)?.records;
    let assessment = load_skeletons(&fixtures.join("assessment.jsonl"), &ingest)?.records;
    let skeletons = match_stage1(&counseling, &assessment);
    let skeleton = &skeletons[0];

    // The timeline component quotes memory cards, so build the memory of
    // the profile's selected candidate first.
    let mut candidates = load_candidates(&fixtures.join("candidates.jsonl"), &ingest)?.records;
    let candidate = candidates.iter_mut().find(|c| c.id == "u01").expect("candidate u01");
    candidate.symptom_timeline =
        threshold_timeline(&candidate.symptom_timeline, ingest.score_threshold)?;
    candidate.event_timeline =
        threshold_timeline(&candidate.event_timeline, ingest.score_threshold)?;
    let memory = build_memory(candidate, &CocConfig::default(), None)?;

    let taxonomy = SymptomTaxonomyMap::default();
    let inputs = PromptInputs {
        skeleton,
        memory: Some(&memory),
        taxonomy: &taxonomy,
        snippet_count: 2,
        max_cards: None,
    };

    // Named ablations resolve to tag sets; explicit lists work too.
    for variant in ["basic", "basic_st", "full_wo_t", "full"] {
        let tags = ablation_tags(variant).expect("known ablation name");
        let prompt = assemble_prompt(&inputs, &tags)?;
        println!(
            "{variant:<10} tags {:<16} {} blocks, {} chars",
            tags.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            tags.len(),
            prompt.len()
        );
    }

    let tags = parse_tags("B,R,P")?;
    let prompt = assemble_prompt(&inputs, &tags)?;
    println!("\n--- B,R,P prompt for {} ---\n{prompt}", skeleton.id);
    Ok(())
}

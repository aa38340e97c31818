//! Two-stage profile alignment: merge counseling and assessment skeletons
//! that describe the same kind of patient (stage 1), then attach ranked
//! social-media candidates to each merged profile (stage 2).
//!
//! ```bash
//! cargo run --example align_profiles
//! ```

use std::path::Path;

use deprofile::align::{expand_stage2, match_stage1, AlignConfig, SymptomTaxonomyMap};
use deprofile::corpus::{load_candidates, load_skeletons, IngestConfig};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ingest = IngestConfig::default();
    let counseling = load_skeletons(&fixtures.join("counseling.jsonl"), &ingest)?.records;
    let assessment = load_skeletons(&fixtures.join("assessment.jsonl"), &ingest)?.records;
    let candidates = load_candidates(&fixtures.join("candidates.jsonl"), &ingest)?.records;

    // Stage 1: the full cross product, kept when demographics agree and no
    // symptom is positive on one side but negative on the other. Merged
    // profiles take personality from counseling and risk from assessment.
    let skeletons = match_stage1(&counseling, &assessment);
    println!(
        "stage 1: {} x {} pairs -> {} unified skeletons",
        counseling.len(),
        assessment.len(),
        skeletons.len()
    );

    // Stage 2: demographic prefilter, taxonomy projection onto the shared
    // symptom categories, conflict pruning, then scoring. Both similarity
    // components must strictly exceed their thresholds.
    let config = AlignConfig::default();
    let taxonomy = SymptomTaxonomyMap::default();
    let skeleton = &skeletons[0];
    let profile = expand_stage2(skeleton, &candidates, &taxonomy, &config)?;
    let record = profile.to_record(&config);

    println!(
        "\nstage 2 for {} (thresholds: symp > {}, pers > {}):",
        record.skeleton_id, record.thresholds.sim_symp, record.thresholds.sim_pers
    );
    println!("{:<8}  {:>8}  {:>8}  {:>8}", "rank", "sim_symp", "sim_pers", "sim_total");
    for (rank, candidate) in record.candidates.iter().enumerate() {
        println!(
            "{:<8}  {:>8.4}  {:>8.4}  {:>8.4}  {}",
            rank + 1,
            candidate.sim_symp,
            candidate.sim_pers,
            candidate.sim_total,
            candidate.candidate_id
        );
    }
    Ok(())
}

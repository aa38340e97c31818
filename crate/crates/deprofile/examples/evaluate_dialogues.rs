//! Evaluates interview transcripts along the four reporting axes: embedding
//! realism, inter-patient diversity, judge scores, and the time-citation
//! audit against memory cards.
//!
//! ```bash
//! cargo run --example evaluate_dialogues
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use deprofile::coc::{build_memory, CocConfig};
use deprofile::corpus::{load_candidates, threshold_timeline, IngestConfig};
use deprofile::evalkit::{
    audit_transcript, diversity_qcentroid, judge, realism, PatientEmbeddings,
};
use deprofile::gateway::{Embedder, FixedChat, HashEmbedder};
use deprofile::promptkit::interview::{
    run_interview, scripted_patient, FailurePolicy, InterviewScript, InterviewSetup,
};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");

    // One transcript from the scripted patient mock.
    let script = InterviewScript::bundled();
    let answers: BTreeMap<String, String> = serde_json::from_str(
        &std::fs::read_to_string(fixtures.join("scripted_answers.json")).expect("answers exist"),
    )
    .expect("answers parse");
    let patient = scripted_patient(script, &answers)?;
    let setup = InterviewSetup {
        profile_id: "c01+a01",
        config_hash: "example",
        system_prompt: "You are a simulated patient.",
        failure_policy: FailurePolicy::Abort,
    };
    let transcript = run_interview(&setup, script, &patient);

    // Realism: cosine between the mean generated utterance embedding and
    // the mean of reference utterances, per patient. The hash embedder is a
    // deterministic stand-in for a semantic model.
    let embedder = HashEmbedder { dim: 32 };
    let embed = |texts: Vec<String>| -> deprofile::Result<Vec<Vec<f64>>> {
        Ok(embedder.embed(&texts)?.into_iter().map(|e| e.vector).collect())
    };
    let generated: PatientEmbeddings = BTreeMap::from([(
        "c01+a01".to_string(),
        embed(transcript.turns.iter().map(|t| t.answer.clone()).collect())?,
    )]);
    let real: PatientEmbeddings = BTreeMap::from([(
        "c01+a01".to_string(),
        embed(vec![
            "I keep waking up at four and cannot fall back asleep.".to_string(),
            "Most days I just feel flat.".to_string(),
        ])?,
    )]);
    let realism_report = realism(&generated, &real)?;
    println!("realism mean: {:.4}", realism_report.mean);

    // Diversity: per question, the mean distance of all patients' answers
    // from the answer centroid.
    let mut by_question: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for turn in transcript.turns.iter().take(10) {
        by_question.insert(
            turn.question_id.clone(),
            embed(vec![turn.answer.clone(), format!("{} indeed", turn.answer)])?,
        );
    }
    let diversity_report = diversity_qcentroid(&by_question)?;
    println!(
        "diversity overall: {:.4} over {} questions",
        diversity_report.overall.unwrap_or(0.0),
        diversity_report.per_question.len()
    );

    // Judge: any chat backend that returns the JSON verdict schema works;
    // a fixed mock keeps this example offline.
    let judge_client = FixedChat {
        reply: r#"{"persona_faithfulness": 4, "event_richness": 3, "symptom_consistency": 4,
                   "reasons": {"note": "demo"}, "extracted_events": ["internship rejection"]}"#
            .to_string(),
    };
    let verdict = judge(&transcript, "system prompt shown to the judge", &judge_client)?;
    println!(
        "judge verdict: faithfulness {} richness {} consistency {}",
        verdict.persona_faithfulness, verdict.event_richness, verdict.symptom_consistency
    );

    // Citation audit: every relative-time expression in the answers must
    // match a memory card's representative label.
    let ingest = IngestConfig::default();
    let mut candidates = load_candidates(&fixtures.join("candidates.jsonl"), &ingest)?.records;
    let candidate = candidates.iter_mut().find(|c| c.id == "u01").expect("candidate u01");
    candidate.symptom_timeline =
        threshold_timeline(&candidate.symptom_timeline, ingest.score_threshold)?;
    candidate.event_timeline =
        threshold_timeline(&candidate.event_timeline, ingest.score_threshold)?;
    let memory = build_memory(candidate, &CocConfig::default(), None)?;
    let audit = audit_transcript(&transcript, &memory.cards);
    println!(
        "citation audit: {} time mentions, {} matched, {} unmatched",
        audit.total_mentions, audit.matched, audit.unmatched
    );
    Ok(())
}

//! Runs the bundled three-stage interview script (persona, symptom,
//! timeline) against a scripted patient backend and prints the transcript
//! shape. Swap the scripted mock for an HTTP backend to interview a live
//! model.
//!
//! ```bash
//! cargo run --example run_interview
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use deprofile::promptkit::interview::{
    run_interview, scripted_patient, FailurePolicy, InterviewScript, InterviewSetup,
    InterviewStage,
};

fn main() -> deprofile::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let script = InterviewScript::bundled();
    let answers: BTreeMap<String, String> = serde_json::from_str(
        &std::fs::read_to_string(fixtures.join("scripted_answers.json"))
            .expect("bundled answers exist"),
    )
    .expect("answers parse");

    // The scripted mock answers by question text; unanswerable questions
    // become failed turns handled per the failure policy.
    let patient = scripted_patient(script, &answers)?;
    let setup = InterviewSetup {
        profile_id: "c01+a01",
        config_hash: "example",
        system_prompt: "You are a simulated patient. Answer briefly.",
        failure_policy: FailurePolicy::Abort,
    };
    let transcript = run_interview(&setup, script, &patient);

    let count = |stage: InterviewStage| transcript.turns.iter().filter(|t| t.stage == stage).count();
    println!(
        "status {:?}: {} turns ({} persona, {} symptom, {} timeline)",
        transcript.status,
        transcript.turns.len(),
        count(InterviewStage::Persona),
        count(InterviewStage::Symptom),
        count(InterviewStage::Timeline),
    );

    println!("\nfirst turns:");
    for turn in transcript.turns.iter().take(5) {
        println!("  [{}] Q: {}", turn.question_id, turn.question);
        println!("      A: {}", turn.answer);
    }
    Ok(())
}

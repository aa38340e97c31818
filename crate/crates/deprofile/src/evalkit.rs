//! Automatic evaluation: embedding-based realism and inter-patient
//! diversity, an LLM-as-a-judge pass with strict verdict validation, and a
//! citation audit that checks timeline mentions against memory cards.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::coc::MemoryCard;
use crate::error::{Error, Result};
use crate::gateway::{ChatClient, ChatTurn, Role};
use crate::promptkit::interview::DialogueTranscript;

/// Utterance embeddings grouped by patient id.
pub type PatientEmbeddings = BTreeMap<String, Vec<Vec<f64>>>;

fn check_dims(vectors: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = vectors.first() else {
        return Err(Error::invalid("empty embedding set"));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::invalid("zero-dimensional embedding"));
    }
    for v in vectors {
        if v.len() != dim {
            return Err(Error::invalid(format!(
                "inconsistent embedding dims {} vs {dim}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite embedding entry"));
        }
    }
    Ok(dim)
}

/// Componentwise arithmetic mean of a non-empty, dimension-consistent set.
pub fn mean_embedding(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = check_dims(vectors)?;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = vectors.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Cosine similarity; errors on a zero-norm side where it is undefined.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "cosine over mismatched dims {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::invalid("cosine undefined for a zero vector"));
    }
    Ok(dot / (norm_a * norm_b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub per_patient: BTreeMap<String, f64>,
    pub mean: f64,
}

/// Per patient: cosine between the mean generated-utterance embedding and
/// the mean real-utterance embedding; the report mean averages over
/// patients. Both sides must cover exactly the same patient ids.
pub fn realism(generated: &PatientEmbeddings, real: &PatientEmbeddings) -> Result<RealismReport> {
    let gen_ids: BTreeSet<_> = generated.keys().collect();
    let real_ids: BTreeSet<_> = real.keys().collect();
    if gen_ids != real_ids {
        let only_gen: Vec<_> = gen_ids.difference(&real_ids).collect();
        let only_real: Vec<_> = real_ids.difference(&gen_ids).collect();
        return Err(Error::invalid(format!(
            "patient sets differ (generated-only {only_gen:?}, real-only {only_real:?})"
        )));
    }
    if generated.is_empty() {
        return Err(Error::invalid("realism over zero patients"));
    }
    let mut per_patient = BTreeMap::new();
    for (id, gen_vectors) in generated {
        let g = mean_embedding(gen_vectors)
            .map_err(|e| Error::invalid(format!("patient {id}: {e}")))?;
        let r = mean_embedding(&real[id])
            .map_err(|e| Error::invalid(format!("patient {id}: {e}")))?;
        let value =
            cosine(&g, &r).map_err(|e| Error::invalid(format!("patient {id}: {e}")))?;
        per_patient.insert(id.clone(), value);
    }
    let mean = per_patient.values().sum::<f64>() / per_patient.len() as f64;
    Ok(RealismReport { per_patient, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_question: BTreeMap<String, f64>,
    /// Mean over questions with at least two answers; `None` when no
    /// question qualifies.
    pub overall: Option<f64>,
    /// Questions excluded because their centroid (or an answer) made the
    /// cosine undefined.
    pub skipped: Vec<String>,
}

/// Q-centroid inter-patient diversity: per question, the mean of
/// `1 - cos(answer, centroid)` over all patients' answers to it.
pub fn diversity_qcentroid(
    answers_by_question: &BTreeMap<String, Vec<Vec<f64>>>,
) -> Result<DiversityReport> {
    let mut per_question = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut contributing = Vec::new();

    for (question, answers) in answers_by_question {
        let centroid = mean_embedding(answers)
            .map_err(|e| Error::invalid(format!("question {question}: {e}")))?;
        let mut total = 0.0;
        let mut defined = true;
        for answer in answers {
            match cosine(answer, &centroid) {
                Ok(c) => total += 1.0 - c,
                Err(_) => {
                    defined = false;
                    break;
                }
            }
        }
        if !defined {
            skipped.push(question.clone());
            continue;
        }
        let value = total / answers.len() as f64;
        per_question.insert(question.clone(), value);
        if answers.len() >= 2 {
            contributing.push(value);
        }
    }

    let overall = if contributing.is_empty() {
        None
    } else {
        Some(contributing.iter().sum::<f64>() / contributing.len() as f64)
    };
    Ok(DiversityReport { per_question, overall, skipped })
}

// ---------------------------------------------------------------------------
// LLM-as-a-judge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub persona_faithfulness: u8,
    pub event_richness: u8,
    pub symptom_consistency: u8,
    #[serde(default)]
    pub reasons: serde_json::Value,
    pub extracted_events: Vec<String>,
}

impl JudgeVerdict {
    pub fn validate(&self) -> Result<()> {
        for (name, score) in [
            ("persona_faithfulness", self.persona_faithfulness),
            ("event_richness", self.event_richness),
            ("symptom_consistency", self.symptom_consistency),
        ] {
            if !(1..=5).contains(&score) {
                return Err(Error::invalid(format!("{name} score {score} outside [1, 5]")));
            }
        }
        Ok(())
    }
}

const SCHEMA_JSON: &str = r#"{
  "persona_faithfulness": "integer 1-5",
  "event_richness": "integer 1-5",
  "symptom_consistency": "integer 1-5",
  "reasons": {
    "persona_faithfulness": "brief reason with evidence",
    "event_richness": "brief reason with evidence",
    "symptom_consistency": "brief reason with evidence"
  },
  "extracted_events": ["explicitly mentioned life event"]
}"#;

const JUDGE_PROMPT_TEMPLATE: &str = "You are a clinical psychology expert and an expert \
evaluator for role-playing dialogue systems. Your task is to evaluate the quality of the \
patient's responses in the dialogue based on (i) the patient profile and constraints, and \
(ii) the exact System Prompt that the patient model actually saw when generating its responses.\n\
\n\
[1. System Prompt seen by the patient model during generation (IMPORTANT): includes patient \
profile and constraints]\n\
\n\
{patient_prompt_text}\n\
\n\
[2. Dialogue context (multi-turn; question = clinician/doctor, answer = patient)]\n\
\n\
{dialogue}\n\
\n\
[3. Rating dimensions (each must be an integer from 1 to 5)]\n\
\n\
A) persona_faithfulness: Whether the responses are consistent with the demographics and Big \
Five personality traits (no contradictions; consistent speaking style).\n\
B) event_richness: Whether the dialogue mentions life events more concretely, with richer \
categories and more diverse time spans. Mentioning explicit time points should receive higher \
scores.\n\
C) symptom_consistency: Whether the symptoms expressed in the dialogue are consistent with the \
profile's positive/negative symptoms, without contradictions or adding major symptoms not \
supported by the profile.\n\
\n\
[4. Output requirements]\n\
\n\
- Output STRICT JSON only. No Markdown. No extra text.\n\
- Provide a score for each dimension, plus brief reasons and evidence points.\n\
- Also extract a list of \"explicitly mentioned life events\" in the dialogue as \
extracted_events (output an empty array if none).\n\
\n\
The required JSON schema is:\n\
\n\
{SCHEMA_JSON}";

fn render_dialogue(transcript: &DialogueTranscript) -> String {
    transcript
        .turns
        .iter()
        .filter(|t| t.error.is_none())
        .map(|t| format!("Doctor: {}\nPatient: {}", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The full judge prompt for one transcript.
pub fn judge_prompt(transcript: &DialogueTranscript, patient_prompt: &str) -> String {
    JUDGE_PROMPT_TEMPLATE
        .replace("{patient_prompt_text}", patient_prompt)
        .replace("{dialogue}", &render_dialogue(transcript))
        .replace("{SCHEMA_JSON}", SCHEMA_JSON)
}

fn parse_verdict(reply: &str) -> Result<JudgeVerdict> {
    let verdict: JudgeVerdict = serde_json::from_str(reply.trim())
        .map_err(|e| Error::invalid(format!("not a JSON verdict: {e}")))?;
    verdict.validate()?;
    Ok(verdict)
}

const JUDGE_ASK: &str = "Evaluate the dialogue and output the JSON verdict now.";

/// Judges one transcript. An invalid first reply triggers exactly one
/// corrective re-ask; a second invalid reply is the returned error.
pub fn judge(
    transcript: &DialogueTranscript,
    patient_prompt: &str,
    client: &dyn ChatClient,
) -> Result<JudgeVerdict> {
    let system = judge_prompt(transcript, patient_prompt);
    let first = client.chat(&system, &[], JUDGE_ASK)?;
    let first_err = match parse_verdict(&first) {
        Ok(verdict) => return Ok(verdict),
        Err(e) => e,
    };
    let history = vec![
        ChatTurn { role: Role::User, text: JUDGE_ASK.to_string() },
        ChatTurn { role: Role::Assistant, text: first.clone() },
    ];
    let correction = format!(
        "Your previous reply was not a valid verdict: {first_err}. Output STRICT JSON only, \
         matching the required schema exactly, with integer scores from 1 to 5 and an \
         extracted_events array."
    );
    let second = client.chat(&system, &history, &correction)?;
    parse_verdict(&second).map_err(|e| {
        Error::backend(client.name(), format!("invalid verdict after re-ask: {e}"))
    })
}

// ---------------------------------------------------------------------------
// Citation audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationAudit {
    pub total_mentions: usize,
    pub matched: usize,
    pub unmatched: usize,
}

impl CitationAudit {
    fn add(&mut self, other: CitationAudit) {
        self.total_mentions += other.total_mentions;
        self.matched += other.matched;
        self.unmatched += other.unmatched;
    }
}

fn time_expression_pattern() -> &'static regex::Regex {
    static PATTERN: OnceLock<regex::Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        regex::Regex::new(r"(?i)\b(today|yesterday|\d+ (?:day|week|month|year)s? ago)\b")
            .expect("static pattern compiles")
    })
}

/// The representative relative time a card was rendered with, recovered
/// from the card text's fixed leading clause.
pub fn representative_label(card: &MemoryCard) -> Option<&str> {
    let rest = card.card_text.strip_prefix("Representative time: ")?;
    Some(rest[..rest.find(" (")?].trim())
}

/// Scans answers for relative-time expressions and checks each against the
/// cards' representative times.
pub fn audit_citations<'a>(
    answers: impl IntoIterator<Item = &'a str>,
    cards: &[MemoryCard],
) -> CitationAudit {
    let known: BTreeSet<String> = cards
        .iter()
        .filter_map(representative_label)
        .map(|l| l.to_ascii_lowercase())
        .collect();
    let mut audit = CitationAudit::default();
    for answer in answers {
        for m in time_expression_pattern().find_iter(answer) {
            audit.total_mentions += 1;
            if known.contains(&m.as_str().to_ascii_lowercase()) {
                audit.matched += 1;
            } else {
                audit.unmatched += 1;
            }
        }
    }
    audit
}

pub fn audit_transcript(transcript: &DialogueTranscript, cards: &[MemoryCard]) -> CitationAudit {
    audit_citations(transcript.turns.iter().map(|t| t.answer.as_str()), cards)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevalMeans {
    pub persona_faithfulness: f64,
    pub event_richness: f64,
    pub symptom_consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevalReport {
    pub per_transcript: BTreeMap<String, JudgeVerdict>,
    /// Transcripts whose judging failed even after the re-ask.
    pub failures: BTreeMap<String, String>,
    pub means: Option<GevalMeans>,
}

impl GevalReport {
    pub fn from_results(results: BTreeMap<String, Result<JudgeVerdict>>) -> Self {
        let mut per_transcript = BTreeMap::new();
        let mut failures = BTreeMap::new();
        for (id, result) in results {
            match result {
                Ok(verdict) => {
                    per_transcript.insert(id, verdict);
                }
                Err(e) => {
                    failures.insert(id, e.to_string());
                }
            }
        }
        let means = if per_transcript.is_empty() {
            None
        } else {
            let n = per_transcript.len() as f64;
            let sum = |f: fn(&JudgeVerdict) -> u8| {
                per_transcript.values().map(|v| f(v) as f64).sum::<f64>() / n
            };
            Some(GevalMeans {
                persona_faithfulness: sum(|v| v.persona_faithfulness),
                event_richness: sum(|v| v.event_richness),
                symptom_consistency: sum(|v| v.symptom_consistency),
            })
        };
        GevalReport { per_transcript, failures, means }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationAuditReport {
    pub per_transcript: BTreeMap<String, CitationAudit>,
    pub total: CitationAudit,
}

impl CitationAuditReport {
    pub fn from_per_transcript(per_transcript: BTreeMap<String, CitationAudit>) -> Self {
        let mut total = CitationAudit::default();
        for audit in per_transcript.values() {
            total.add(*audit);
        }
        CitationAuditReport { per_transcript, total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub config_hash: String,
    pub realism: Option<RealismReport>,
    pub diversity: Option<DiversityReport>,
    pub geval: Option<GevalReport>,
    pub citation_audit: Option<CitationAuditReport>,
}

/// Renders the summary table: one column per headline metric, with `-`
/// marking metrics the run did not compute.
pub fn render_table(report: &EvalReport) -> String {
    let fmt = |v: Option<f64>| match v {
        Some(v) => {
            let s = format!("{v:.4}");
            // Float noise below the displayed precision rounds to "-0.0000".
            if s == "-0.0000" { "0.0000".to_string() } else { s }
        }
        None => "-".to_string(),
    };
    let realism = fmt(report.realism.as_ref().map(|r| r.mean));
    let diversity = fmt(report.diversity.as_ref().and_then(|d| d.overall));
    let richness = fmt(
        report
            .geval
            .as_ref()
            .and_then(|g| g.means.as_ref())
            .map(|m| m.event_richness),
    );
    let header = format!("{:<10}  {:<10}  {:<15}", "Realism", "Diversity", "Event Richness");
    let row = format!("{realism:<10}  {diversity:<10}  {richness:<15}");
    format!("{header}\n{row}\n")
}
